//! Per-edge log-likelihood and its exact gradient.
//!
//! The kernel is handled as `L = B A B` with `A = V M Vᵀ + I` and
//! `M = I + γC`. The symmetric part of `A` dominates the identity, so every
//! principal minor of `A` and of `A⁻¹` is positive. For an edge `e`,
//! `log det L_e = 2 Σ_{i∈e} log βᵢ + log det A_e`, and `log det A_e` is
//! computed either directly or through the complementary minor
//! `log det A + log det (A⁻¹)_ē`, whichever block is smaller.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::hyperedge::Hyperedge;
use crate::linalg::{principal_submatrix, Lu};
use crate::params::{ModelParams, SkewMatrix};

/// Floor applied to `det(L_e)` before taking logs.
pub const DEFAULT_DET_FLOOR: f64 = 1e-300;

/// Observed hyperedges grouped by distinct edge.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeCounts {
    n: usize,
    edges: Vec<(Hyperedge, usize)>,
    total: usize,
}

impl EdgeCounts {
    pub fn from_edges<'a, I>(n: usize, edges: I) -> Result<Self>
    where
        I: IntoIterator<Item = &'a Hyperedge>,
    {
        let mut counts: BTreeMap<Hyperedge, usize> = BTreeMap::new();
        for e in edges {
            e.check_range(n)?;
            *counts.entry(e.clone()).or_default() += 1;
        }
        let total = counts.values().sum();
        if total == 0 {
            return Err(Error::InvalidArgument("no edges observed".into()));
        }
        Ok(EdgeCounts { n, edges: counts.into_iter().collect(), total })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Total edge count `m`, multiplicities included.
    pub fn total(&self) -> usize {
        self.total
    }

    pub fn distinct(&self) -> usize {
        self.edges.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Hyperedge, usize)> {
        self.edges.iter().map(|(e, c)| (e, *c))
    }

    /// Empirical frequency `p̂_e`.
    pub fn frequency(&self, e: &Hyperedge) -> f64 {
        self.edges
            .binary_search_by(|(x, _)| x.cmp(e))
            .map(|k| self.edges[k].1 as f64 / self.total as f64)
            .unwrap_or(0.0)
    }

    pub fn mean_size(&self) -> f64 {
        self.iter().map(|(e, c)| (e.len() * c) as f64).sum::<f64>() / self.total as f64
    }

    /// The edges as a flat list, each repeated by its multiplicity.
    pub fn expand(&self) -> Vec<Hyperedge> {
        self.iter().flat_map(|(e, c)| std::iter::repeat_n(e.clone(), c)).collect()
    }
}

/// Unconstrained parameter values; also the input to projection.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamsCandidate {
    pub beta: DVector<f64>,
    pub latent: DMatrix<f64>,
    /// Dense `d × d`; `None` for the symmetric model.
    pub skew: Option<DMatrix<f64>>,
    pub gamma: f64,
}

impl From<&ModelParams> for ParamsCandidate {
    fn from(p: &ModelParams) -> Self {
        ParamsCandidate {
            beta: p.beta().clone(),
            latent: p.latent().clone(),
            skew: p.skew().map(SkewMatrix::to_dense),
            gamma: p.gamma(),
        }
    }
}

impl ParamsCandidate {
    pub fn n(&self) -> usize {
        self.latent.nrows()
    }

    pub fn d(&self) -> usize {
        self.latent.ncols()
    }

    fn core(&self) -> DMatrix<f64> {
        let mut m = DMatrix::identity(self.d(), self.d());
        if let Some(c) = &self.skew {
            m += c * self.gamma;
        }
        m
    }
}

/// Gradient with the same layout as the parameters. `skew_upper` is the
/// derivative with respect to the stored upper-triangle entries `c_kl`
/// (`C_kl = c_kl`, `C_lk = −c_kl`); empty for the symmetric model.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub beta: DVector<f64>,
    pub latent: DMatrix<f64>,
    pub skew_upper: Vec<f64>,
    pub gamma: f64,
}

#[derive(Debug, Clone)]
pub struct Evaluation {
    pub value: f64,
    pub gradient: Option<Gradient>,
    /// Edges (with multiplicity) whose minor hit the floor.
    pub clamped: usize,
}

pub fn log_likelihood(params: &ModelParams, data: &EdgeCounts) -> Result<f64> {
    Ok(evaluate(&params.into(), data, DEFAULT_DET_FLOOR, false)?.value)
}

pub fn gradient(params: &ModelParams, data: &EdgeCounts) -> Result<Gradient> {
    Ok(evaluate(&params.into(), data, DEFAULT_DET_FLOOR, true)?.gradient.expect("gradient requested"))
}

fn scatter_add(target: &mut DMatrix<f64>, idx: &[usize], block: &DMatrix<f64>, weight: f64, transpose: bool) {
    for (r, &i) in idx.iter().enumerate() {
        for (c, &j) in idx.iter().enumerate() {
            let v = if transpose { block[(c, r)] } else { block[(r, c)] };
            target[(i, j)] += weight * v;
        }
    }
}

/// Objective `(1/m) Σ_s log det L_{e_s} − log det(L + I)` and optionally its
/// gradient, evaluated at unconstrained values.
pub fn evaluate(cand: &ParamsCandidate, data: &EdgeCounts, det_floor: f64, with_gradient: bool) -> Result<Evaluation> {
    let n = cand.n();
    let d = cand.d();
    if data.n() != n {
        return Err(Error::Dimension(format!("data has {} nodes, parameters have {n}", data.n())));
    }
    if cand.beta.len() != n {
        return Err(Error::Dimension("beta length does not match V".into()));
    }
    if let Some(c) = &cand.skew {
        if c.shape() != (d, d) {
            return Err(Error::Dimension("C does not match the latent dimension".into()));
        }
    }
    let beta = &cand.beta;
    let v = &cand.latent;
    let m_core = cand.core();
    let mut a = v * &m_core * v.transpose();
    for i in 0..n {
        a[(i, i)] += 1.0;
    }
    let log_beta: Vec<f64> = beta.iter().map(|b| b.ln()).collect();
    let floor_log = det_floor.ln();
    let total = data.total() as f64;

    let needs_complement = data.iter().any(|(e, _)| n - e.len() < e.len());
    let (a_inv, log_det_a) = if needs_complement {
        let lu = Lu::new(a.clone());
        let ld = lu.log_det();
        let inv = lu.inverse();
        match (ld.positive_log(), inv) {
            (Some(ld), Some(inv)) => (Some(inv), ld),
            _ => return Err(Error::IllConditioned("V M Vᵀ + I is not invertible".into())),
        }
    } else {
        (None, 0.0)
    };

    let mut value = 0.0;
    let mut clamped = 0;
    let mut node_weight = vec![0.0; n];
    let mut h = with_gradient.then(|| DMatrix::<f64>::zeros(n, n));
    let mut comp_acc = (with_gradient && needs_complement).then(|| DMatrix::<f64>::zeros(n, n));
    let mut comp_weight = 0.0;

    for (index, (e, count)) in data.iter().enumerate() {
        let w = count as f64 / total;
        let nodes = e.nodes();
        let complement = e.complement(n);
        let use_complement = complement.len() < nodes.len();
        let (block_inv, offset) = if use_complement {
            let a_inv = a_inv.as_ref().expect("complement inverse computed");
            (Lu::new(principal_submatrix(a_inv, &complement)), log_det_a)
        } else {
            (Lu::new(principal_submatrix(&a, nodes)), 0.0)
        };
        let ld = block_inv.log_det();
        if ld.log_abs.is_nan() || ld.sign.is_nan() {
            return Err(Error::NonFiniteDeterminant { index });
        }
        let log_det_ae = ld.positive_log().map(|v| v + offset);
        let log_det_le = log_det_ae.map(|v| v + 2.0 * nodes.iter().map(|&i| log_beta[i]).sum::<f64>());
        match log_det_le {
            Some(ld) if ld.is_finite() && ld > floor_log => {
                value += w * ld;
                for &i in nodes {
                    node_weight[i] += w;
                }
                if let Some(h) = h.as_mut() {
                    let inv = block_inv.inverse().ok_or(Error::NonFiniteDeterminant { index })?;
                    if use_complement {
                        scatter_add(comp_acc.as_mut().unwrap(), &complement, &inv, w, false);
                        comp_weight += w;
                    } else {
                        scatter_add(h, nodes, &inv, w, true);
                    }
                }
            }
            Some(ld) if ld.is_nan() => return Err(Error::NonFiniteDeterminant { index }),
            _ => {
                value += w * floor_log;
                clamped += count;
            }
        }
    }

    let mut l_plus_i = a.clone();
    for i in 0..n {
        for j in 0..n {
            l_plus_i[(i, j)] *= beta[i] * beta[j];
        }
        l_plus_i[(i, i)] += 1.0;
    }
    let lu = Lu::new(l_plus_i);
    let Some(log_norm) = lu.log_det().positive_log() else {
        return Err(Error::IllConditioned("det(L + I) is not positive".into()));
    };
    value -= log_norm;
    if !value.is_finite() {
        return Err(Error::IllConditioned(format!("objective is {value}")));
    }

    let gradient = match h {
        None => None,
        Some(mut h) => {
            if let (Some(acc), Some(a_inv)) = (comp_acc, a_inv.as_ref()) {
                // Σ w (A⁻¹ − A⁻¹ Pᵀ Y⁻¹ P A⁻¹), transposed into adjoint form
                let corr = a_inv * acc * a_inv;
                h += (a_inv * comp_weight - corr).transpose();
            }
            let g_norm = lu
                .inverse()
                .ok_or_else(|| Error::IllConditioned("L + I is singular".into()))?
                .transpose();
            // adjoint with respect to A: edge part minus B G B
            let mut h_a = h;
            for i in 0..n {
                for j in 0..n {
                    h_a[(i, j)] -= beta[i] * g_norm[(i, j)] * beta[j];
                }
            }
            let mut grad_beta = DVector::zeros(n);
            for k in 0..n {
                let mut s = 0.0;
                for j in 0..n {
                    s += (g_norm[(k, j)] * a[(k, j)] + g_norm[(j, k)] * a[(j, k)]) * beta[j];
                }
                grad_beta[k] = 2.0 * node_weight[k] / beta[k] - s;
            }
            let grad_latent = &h_a * v * m_core.transpose() + h_a.transpose() * v * &m_core;
            let (skew_upper, grad_gamma) = match &cand.skew {
                Some(c) => {
                    let z = v.transpose() * &h_a * v;
                    let mut upper = Vec::with_capacity(SkewMatrix::upper_len(d));
                    for k in 0..d {
                        for l in k + 1..d {
                            upper.push(cand.gamma * (z[(k, l)] - z[(l, k)]));
                        }
                    }
                    (upper, z.component_mul(c).sum())
                }
                None => (Vec::new(), 0.0),
            };
            Some(Gradient { beta: grad_beta, latent: grad_latent, skew_upper, gamma: grad_gamma })
        }
    };

    Ok(Evaluation { value, gradient, clamped })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::build_kernel;
    use crate::synth::random_params;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn one_node(beta: f64) -> ModelParams {
        ModelParams::symmetric(DVector::from_element(1, beta), DMatrix::from_row_slice(1, 2, &[1.0, 0.0])).unwrap()
    }

    /// Independent oracle: per-edge minors of the assembled kernel.
    fn naive(params: &ModelParams, edges: &[Hyperedge]) -> f64 {
        let l = build_kernel(params);
        let s: f64 = edges.iter().map(|e| l.principal_log_det(e).log_abs).sum();
        s / edges.len() as f64 - l.log_normalizer().log_abs
    }

    fn random_edges<R: Rng>(n: usize, m: usize, rng: &mut R) -> Vec<Hyperedge> {
        (0..m)
            .map(|_| {
                let k = rng.random_range(1..=n);
                Hyperedge::new(rand::seq::index::sample(rng, n, k).into_iter())
            })
            .collect()
    }

    #[test]
    fn one_node_value() {
        let data = EdgeCounts::from_edges(1, &[Hyperedge::from([0])]).unwrap();
        assert_relative_eq!(log_likelihood(&one_node(1.0), &data).unwrap(), 2f64.ln() - 3f64.ln(), epsilon = 1e-15);
        let twice = EdgeCounts::from_edges(1, &[Hyperedge::from([0]), Hyperedge::from([0])]).unwrap();
        assert_eq!(
            log_likelihood(&one_node(1.0), &data).unwrap(),
            log_likelihood(&one_node(1.0), &twice).unwrap()
        );
    }

    #[test]
    fn grouped_matches_naive() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..10 {
            let p = random_params(8, 3, (0.3, 2.0), (0.0, 2.0), &mut rng).unwrap();
            let edges = random_edges(8, 50, &mut rng);
            let data = EdgeCounts::from_edges(8, &edges).unwrap();
            let got = log_likelihood(&p, &data).unwrap();
            assert_relative_eq!(got, naive(&p, &edges), epsilon = 1e-10);
        }
    }

    #[test]
    fn empty_data_rejected() {
        assert!(EdgeCounts::from_edges(3, &[]).is_err());
        assert!(matches!(
            EdgeCounts::from_edges(3, &[Hyperedge::from([3])]),
            Err(Error::NodeOutOfRange { node: 3, n: 3 })
        ));
    }

    #[test]
    fn one_node_stationary_point() {
        // φ(β) = f log(2β²) − log(1 + 2β²); locate the root of φ' by bisection.
        let f = 0.7;
        let dphi = |b: f64| 2.0 * f / b - 4.0 * b / (1.0 + 2.0 * b * b);
        let (mut lo, mut hi) = (1e-3, 10.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if dphi(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let b_star = 0.5 * (lo + hi);
        let mut edges = vec![Hyperedge::from([0]); 7];
        edges.extend(vec![Hyperedge::empty(); 3]);
        let data = EdgeCounts::from_edges(1, &edges).unwrap();
        let g = gradient(&one_node(b_star), &data).unwrap();
        assert!(g.beta[0].abs() < 1e-8, "gradient {}", g.beta[0]);
    }

    #[test]
    fn symmetric_gamma_gradient_is_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = random_params(6, 3, (0.5, 1.5), (0.0, 0.0), &mut rng).unwrap();
        let p = ModelParams::symmetric(p.beta().clone(), p.latent().clone()).unwrap();
        let data = EdgeCounts::from_edges(6, &random_edges(6, 20, &mut rng)).unwrap();
        let g = gradient(&p, &data).unwrap();
        assert_eq!(g.gamma, 0.0);
        assert!(g.skew_upper.is_empty());
    }

    #[test]
    fn direct_and_complement_routes_agree() {
        // Large edges take the complement route; compare with the kernel oracle.
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = random_params(9, 3, (0.5, 3.0), (0.0, 1.0), &mut rng).unwrap();
        let edges: Vec<Hyperedge> = (0..30)
            .map(|_| {
                let k = rng.random_range(6..=9);
                Hyperedge::new(rand::seq::index::sample(&mut rng, 9, k).into_iter())
            })
            .collect();
        let data = EdgeCounts::from_edges(9, &edges).unwrap();
        assert_relative_eq!(log_likelihood(&p, &data).unwrap(), naive(&p, &edges), epsilon = 1e-10);
    }

    fn perturbed(cand: &ParamsCandidate, k: usize, h: f64) -> ParamsCandidate {
        let n = cand.n();
        let d = cand.d();
        let mut c = cand.clone();
        if k < n {
            c.beta[k] += h;
        } else if k < n + n * d {
            let j = k - n;
            c.latent[(j / d, j % d)] += h;
        } else if k < n + n * d + d * (d - 1) / 2 {
            let mut j = k - n - n * d;
            let skew = c.skew.as_mut().unwrap();
            'outer: for r in 0..d {
                for col in r + 1..d {
                    if j == 0 {
                        skew[(r, col)] += h;
                        skew[(col, r)] -= h;
                        break 'outer;
                    }
                    j -= 1;
                }
            }
        } else {
            c.gamma += h;
        }
        c
    }

    fn check_gradient(cand: &ParamsCandidate, data: &EdgeCounts) {
        let (n, d) = (cand.n(), cand.d());
        let g = evaluate(cand, data, DEFAULT_DET_FLOOR, true).unwrap().gradient.unwrap();
        let mut analytic: Vec<f64> = g.beta.iter().copied().collect();
        for r in g.latent.row_iter() {
            analytic.extend(r.iter());
        }
        analytic.extend(&g.skew_upper);
        analytic.push(g.gamma);
        let f = |c: &ParamsCandidate| evaluate(c, data, DEFAULT_DET_FLOOR, false).unwrap().value;
        let h = 1e-6;
        let numeric: Vec<f64> = (0..analytic.len())
            .map(|k| (f(&perturbed(cand, k, h)) - f(&perturbed(cand, k, -h))) / (2.0 * h))
            .collect();
        let diff: f64 = analytic.iter().zip(&numeric).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let norm: f64 = numeric.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!(diff / norm < 1e-5, "relative gradient error {} (n={n}, d={d})", diff / norm);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let params = random_params(10, 3, (0.5, 1.5), (0.1, 0.9), &mut rng).unwrap();
        let edges = random_edges(10, 40, &mut rng);
        let data = EdgeCounts::from_edges(10, &edges).unwrap();
        let mut cand = ParamsCandidate::from(&params);
        // move off the constraint set: the objective is defined everywhere
        cand.latent.iter_mut().for_each(|x| *x *= 1.3);
        cand.beta[2] *= 0.7;
        check_gradient(&cand, &data);
        check_gradient(&ParamsCandidate::from(&params), &data);
    }
}
