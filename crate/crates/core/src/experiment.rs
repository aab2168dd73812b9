//! Simulate-then-fit replicates used by the recovery and comparison studies.

use serde::{Deserialize, Serialize};

use crate::alignment::{aligned_errors, ErrorReport};
use crate::error::Result;
use crate::estimation::{fit, EdgeCounts, FitConfig, FitResult};
use crate::hyperedge::Hyperedge;
use crate::kernel::build_kernel;
use crate::params::ModelParams;
use crate::sampler::Sampler;

/// Seed of the sample drawn for replicate `r` at sample size `m`.
pub fn replicate_seed(base: u64, m: usize, replicate: usize) -> u64 {
    base.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ ((m as u64) << 20) ^ replicate as u64
}

pub fn simulate(truth: &ModelParams, m: usize, seed: u64) -> Result<Vec<Hyperedge>> {
    Sampler::new(&build_kernel(truth))?.sample_batch(m, seed)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Replicate {
    pub m: usize,
    pub replicate: usize,
    pub symmetric: bool,
    pub log_likelihood_per_edge: f64,
    pub errors: ErrorReport,
}

/// Draws `m` edges from `truth`, fits with `config` and measures the fit
/// against `truth`.
pub fn fit_replicate(
    truth: &ModelParams,
    edges: &[Hyperedge],
    replicate: usize,
    config: &FitConfig,
) -> Result<(FitResult, Replicate)> {
    let data = EdgeCounts::from_edges(truth.n(), edges)?;
    let fitted = fit(&data, config)?;
    let errors = aligned_errors(&fitted.params, truth)?;
    let rep = Replicate {
        m: edges.len(),
        replicate,
        symmetric: config.symmetric,
        log_likelihood_per_edge: fitted.log_likelihood_per_edge,
        errors,
    };
    Ok((fitted, rep))
}

/// Counts of edges by size, index `k` holding edges of size `k`.
pub fn size_histogram(edges: &[Hyperedge], n: usize) -> Vec<usize> {
    let mut counts = vec![0; n + 1];
    for e in edges {
        counts[e.len()] += 1;
    }
    counts
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let k = v.len();
    if k == 0 {
        f64::NAN
    } else if k % 2 == 1 {
        v[k / 2]
    } else {
        0.5 * (v[k / 2 - 1] + v[k / 2])
    }
}
