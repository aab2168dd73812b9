//! Nonsymmetric determinantal point process models for non-uniform hypergraphs.
//!
//! A hyperedge over `n` nodes is modelled as a random subset drawn with
//! probability `det(L_e) / det(L + I)`, where
//! `L = B V (I + γC) Vᵀ B + B²` combines node popularity `β`, unit latent
//! positions `V` and a skew-symmetric asymmetry `C`.

pub mod alignment;
pub mod data;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod estimation;
pub mod hyperedge;
pub mod kernel;
pub mod linalg;
pub mod params;
pub mod sampler;
pub mod synth;

pub use alignment::{aligned_errors, align_latent, probability_errors, ErrorReport, Rotation, SignFlip};
pub use error::{Error, ErrorKind, Result};
pub use estimation::{fit, log_likelihood, EdgeCounts, FitConfig, FitResult};
pub use hyperedge::Hyperedge;
pub use kernel::{build_kernel, log_prob_exact, marginal_kernel, KernelMatrix, MarginalKernel};
pub use params::{ModelParams, SkewMatrix};
pub use sampler::{sample_batch, sample_hyperedge, Sampler};
pub use synth::{make_scenario, ScenarioSpec};
