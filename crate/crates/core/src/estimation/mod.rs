//! Maximum-likelihood estimation of model parameters.

pub mod cv;
pub mod likelihood;
pub mod optimizer;

pub use likelihood::{evaluate, gradient, log_likelihood, EdgeCounts, Evaluation, Gradient, ParamsCandidate};
pub use cv::{cross_validate_dimension, CvResult, DimensionScore};
pub use optimizer::{fit, fit_from, project, FitConfig, FitDiagnostics, FitResult, ProjectionStats};
