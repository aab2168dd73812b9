//! Exact hyperedge sampling by sequential conditioning on the marginal kernel.
//!
//! Nodes are visited in order; node `i` is included with its current
//! conditional inclusion probability and the trailing block of the working
//! matrix receives a rank-one update. This is an LU-style elimination of
//! `K` and applies to nonsymmetric kernels as well.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::hyperedge::Hyperedge;
use crate::kernel::{marginal_kernel, KernelMatrix, MarginalKernel};

/// Pivots smaller than this abort the draw.
pub const PIVOT_TOLERANCE: f64 = 1e-12;

/// Slack allowed on conditional probabilities before they are reported.
pub const PROBABILITY_SLACK: f64 = 1e-8;

/// Sampler holding the precomputed marginal kernel.
#[derive(Debug, Clone)]
pub struct Sampler {
    marginal: MarginalKernel,
}

impl Sampler {
    pub fn new(kernel: &KernelMatrix) -> Result<Self> {
        Ok(Sampler { marginal: marginal_kernel(kernel)? })
    }

    pub fn from_marginal(marginal: MarginalKernel) -> Self {
        Sampler { marginal }
    }

    pub fn n(&self) -> usize {
        self.marginal.n()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Hyperedge> {
        let n = self.n();
        let mut work: DMatrix<f64> = self.marginal.matrix().clone();
        let mut included = Vec::new();
        for i in 0..n {
            let mut p = work[(i, i)];
            if !(-PROBABILITY_SLACK..=1.0 + PROBABILITY_SLACK).contains(&p) {
                log::warn!("conditional inclusion probability {p} at node {i} outside [0, 1]");
            }
            if rng.random::<f64>() < p {
                included.push(i);
            } else {
                p -= 1.0;
            }
            if i + 1 == n {
                break;
            }
            if p.abs() < PIVOT_TOLERANCE {
                return Err(Error::DegenerateKernel { node: i, pivot: p });
            }
            // residual ← residual − column_i · row_i / p on the trailing block
            for c in i + 1..n {
                let r = work[(i, c)] / p;
                if r == 0.0 {
                    continue;
                }
                for rr in i + 1..n {
                    let col = work[(rr, i)];
                    work[(rr, c)] -= col * r;
                }
            }
        }
        Ok(Hyperedge::new(included))
    }
}

/// One draw from `pr_L`.
pub fn sample_hyperedge<R: Rng + ?Sized>(kernel: &KernelMatrix, rng: &mut R) -> Result<Hyperedge> {
    Sampler::new(kernel)?.sample(rng)
}

/// Independent stream for draw `index` under `seed`.
pub fn draw_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// `m` i.i.d. draws. Draw `k` uses its own stream, so the result does not
/// depend on how the work is scheduled across threads.
pub fn sample_batch(kernel: &KernelMatrix, m: usize, seed: u64) -> Result<Vec<Hyperedge>> {
    Sampler::new(kernel)?.sample_batch(m, seed)
}

impl Sampler {
    pub fn sample_batch(&self, m: usize, seed: u64) -> Result<Vec<Hyperedge>> {
        if m == 0 {
            return Err(Error::InvalidArgument("sample count must be at least 1".into()));
        }
        (0..m as u64)
            .into_par_iter()
            .map(|k| self.sample(&mut draw_rng(seed, k)))
            .collect()
    }

    /// Like [`Sampler::sample_batch`] but redraws edges smaller than
    /// `min_size`; returns the edges and the number of redraws.
    pub fn sample_batch_min_size(&self, m: usize, min_size: usize, seed: u64) -> Result<(Vec<Hyperedge>, usize)> {
        if m == 0 {
            return Err(Error::InvalidArgument("sample count must be at least 1".into()));
        }
        const MAX_REDRAWS: usize = 10_000;
        let out: Vec<(Hyperedge, usize)> = (0..m as u64)
            .into_par_iter()
            .map(|k| {
                let mut rng = draw_rng(seed, k);
                for redraws in 0..MAX_REDRAWS {
                    let e = self.sample(&mut rng)?;
                    if e.len() >= min_size {
                        return Ok((e, redraws));
                    }
                }
                Err(Error::InvalidArgument(format!(
                    "no edge of size >= {min_size} after {MAX_REDRAWS} redraws"
                )))
            })
            .collect::<Result<_>>()?;
        let redraws = out.iter().map(|(_, r)| r).sum();
        if redraws > 0 {
            log::info!("redrew {redraws} edges smaller than {min_size}");
        }
        Ok((out.into_iter().map(|(e, _)| e).collect(), redraws))
    }
}

/// The `d × d` recursion in its printed low-rank form, kept for comparison
/// only. It omits the diagonal contribution `I − (B² + I)⁻¹` of the
/// marginal kernel, so its output does not follow `pr_L` when `β > 0`.
pub mod experimental {
    use super::*;
    use crate::linalg::Lu;
    use crate::params::ModelParams;
    use nalgebra::DVector;

    pub fn sample_hyperedge_printed<R: Rng + ?Sized>(params: &ModelParams, rng: &mut R) -> Result<Hyperedge> {
        let n = params.n();
        let d = params.d();
        let beta = params.beta();
        // Z = (B² + I)⁻¹ B V
        let mut z = params.latent().clone();
        for (i, mut row) in z.row_iter_mut().enumerate() {
            row *= beta[i] / (beta[i] * beta[i] + 1.0);
        }
        let core_inv = Lu::new(params.core())
            .inverse()
            .ok_or_else(|| Error::IllConditioned("I + γC is singular".into()))?;
        // Vᵀ B (B² + I)⁻¹ B V
        let mut bv = params.latent().clone();
        for (i, mut row) in bv.row_iter_mut().enumerate() {
            row *= beta[i];
        }
        let gram = bv.transpose() * &z;
        let mut w = Lu::new(core_inv + gram)
            .inverse()
            .ok_or_else(|| Error::IllConditioned("W is singular".into()))?;
        let mut included = Vec::new();
        for i in 0..n {
            let zi: DVector<f64> = z.row(i).transpose();
            let mut p = (zi.transpose() * &w * &zi)[(0, 0)];
            if rng.random::<f64>() <= p {
                included.push(i);
            } else {
                p -= 1.0;
            }
            if p.abs() < PIVOT_TOLERANCE {
                return Err(Error::DegenerateKernel { node: i, pivot: p });
            }
            let wz = &w * &zi;
            let zw = zi.transpose() * &w;
            w -= (wz * zw) / p;
        }
        debug_assert_eq!(w.nrows(), d);
        Ok(Hyperedge::new(included))
    }
}
