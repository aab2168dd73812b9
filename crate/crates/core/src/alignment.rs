//! Error metrics between estimated and true parameters, taken modulo the
//! sign-flip and rotation symmetries of the model.
//!
//! Two parameter sets related by `V' = S V O`, `C' = Oᵀ C O` (with `S` a
//! diagonal ±1 matrix and `O` orthogonal) give kernels `L' = S L S` and
//! identical subset probabilities, so errors are measured after aligning.

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{build_kernel, marginal_kernel, pairwise_conditional, MarginalKernel};
use crate::params::ModelParams;
use crate::sampler::draw_rng;

/// Random sign restarts tried by [`align_latent`] and the kernel sign search.
pub const SIGN_RESTARTS: usize = 8;
const CONVERGENCE: f64 = 1e-12;
const ALIGN_SEED: u64 = 0x616c_6967_6e00;
/// Reference probabilities below this are skipped.
pub const MIN_PROBABILITY: f64 = 1e-12;

/// Diagonal ±1 matrix stored as its diagonal.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignFlip(Vec<i8>);

impl SignFlip {
    pub fn identity(n: usize) -> Self {
        SignFlip(vec![1; n])
    }

    pub fn new(signs: Vec<i8>) -> Result<Self> {
        if signs.iter().any(|&s| s != 1 && s != -1) {
            return Err(Error::InvalidArgument("sign entries must be ±1".into()));
        }
        Ok(SignFlip(signs))
    }

    pub fn from_mask(n: usize, mask: u64) -> Self {
        SignFlip((0..n).map(|i| if mask >> i & 1 == 1 { -1 } else { 1 }).collect())
    }

    pub fn random<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Self {
        SignFlip((0..n).map(|_| if rng.random::<bool>() { 1 } else { -1 }).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn signs(&self) -> &[i8] {
        &self.0
    }

    pub fn as_f64(&self) -> Vec<f64> {
        self.0.iter().map(|&s| s as f64).collect()
    }

    fn flip(&mut self, i: usize) {
        self.0[i] = -self.0[i];
    }

    /// `S M`.
    pub fn apply_rows(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = m.clone();
        for (i, mut row) in out.row_iter_mut().enumerate() {
            row *= self.0[i] as f64;
        }
        out
    }

    /// `S M S`.
    pub fn conjugate(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| (self.0[i] * self.0[j]) as f64 * m[(i, j)])
    }
}

/// Orthogonal `d × d` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Rotation(DMatrix<f64>);

impl Rotation {
    pub const TOLERANCE: f64 = 1e-10;

    pub fn new(o: DMatrix<f64>) -> Result<Self> {
        if !o.is_square() {
            return Err(Error::Dimension("rotation must be square".into()));
        }
        let d = o.nrows();
        let dev = (o.transpose() * &o - DMatrix::<f64>::identity(d, d)).norm();
        if !(dev < Self::TOLERANCE) {
            return Err(Error::InvalidArgument(format!("matrix is not orthogonal (‖OᵀO − I‖ = {dev:e})")));
        }
        Ok(Rotation(o))
    }

    pub fn identity(d: usize) -> Self {
        Rotation(DMatrix::identity(d, d))
    }

    /// Haar-distributed orthogonal matrix (QR of a Gaussian matrix with
    /// the signs of `R`'s diagonal folded into `Q`).
    pub fn random<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Self {
        let g = DMatrix::from_fn(d, d, |_, _| rng.sample::<f64, _>(rand_distr::StandardNormal));
        let qr = g.qr();
        let mut q = qr.q();
        let r = qr.r();
        for j in 0..d {
            if r[(j, j)] < 0.0 {
                q.column_mut(j).neg_mut();
            }
        }
        Rotation(q)
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }
}

/// Polar factor `U Wᵀ` of `m = U Σ Wᵀ`, the orthogonal matrix maximizing `tr(Oᵀ m)`.
fn polar(m: &DMatrix<f64>) -> DMatrix<f64> {
    let svd = m.clone().svd(true, true);
    svd.u.expect("u requested") * svd.v_t.expect("v_t requested")
}

#[derive(Debug, Clone, PartialEq)]
pub struct LatentAlignment {
    pub signs: SignFlip,
    pub rotation: Rotation,
    /// `‖V̂ − S V* O‖_F / ‖V*‖_F`.
    pub relative_error: f64,
}

fn procrustes(v_hat: &DMatrix<f64>, v_star: &DMatrix<f64>, s: &SignFlip) -> (DMatrix<f64>, f64) {
    let sv = s.apply_rows(v_star);
    let o = polar(&(sv.transpose() * v_hat));
    let err = (v_hat - sv * &o).norm_squared();
    (o, err)
}

/// Alternates Procrustes for `O` and per-row sign choice until the squared
/// error stops decreasing, then tries single sign flips.
fn descend(v_hat: &DMatrix<f64>, v_star: &DMatrix<f64>, mut s: SignFlip) -> (SignFlip, DMatrix<f64>, f64) {
    let n = v_hat.nrows();
    let (mut o, mut err) = procrustes(v_hat, v_star, &s);
    loop {
        let rotated = v_star * &o;
        for i in 0..n {
            let dot = v_hat.row(i).dot(&rotated.row(i));
            s.0[i] = if dot >= 0.0 { 1 } else { -1 };
        }
        let (o_next, err_next) = procrustes(v_hat, v_star, &s);
        let improved = err - err_next > CONVERGENCE;
        if err_next <= err {
            o = o_next;
            err = err_next;
        }
        if improved {
            continue;
        }
        // single flips with the rotation re-solved
        let mut best = None;
        for i in 0..n {
            s.flip(i);
            let (o_try, e_try) = procrustes(v_hat, v_star, &s);
            s.flip(i);
            if err - e_try > CONVERGENCE && best.as_ref().is_none_or(|(_, _, e)| e_try < *e) {
                best = Some((i, o_try, e_try));
            }
        }
        match best {
            Some((i, o_try, e_try)) => {
                s.flip(i);
                o = o_try;
                err = e_try;
            }
            None => return (s, o, err),
        }
    }
}

/// Signs of the leading eigenvector of the symmetric agreement matrix `w`,
/// the spectral relaxation of `max_S Σ sᵢ sⱼ wᵢⱼ`.
fn spectral_signs(w: DMatrix<f64>) -> SignFlip {
    let n = w.nrows();
    let eig = w.symmetric_eigen();
    let top = eig.eigenvalues.iamax();
    let v = eig.eigenvectors.column(top);
    let flip = if v.iter().sum::<f64>() < 0.0 { -1.0 } else { 1.0 };
    SignFlip((0..n).map(|i| if flip * v[i] >= 0.0 { 1 } else { -1 }).collect())
}

fn check_shapes(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::Dimension(format!("shapes {:?} and {:?} differ", a.shape(), b.shape())));
    }
    Ok(())
}

/// Approximate `argmin_{S, O} ‖V̂ − S V* O‖_F`, best over the identity, a
/// spectral start and [`SIGN_RESTARTS`] random sign starts. The spectral
/// start compares Gram matrices, which do not depend on `O`, and recovers
/// `S` exactly when `V̂ = S V* O`. Deterministic.
pub fn align_latent(v_hat: &DMatrix<f64>, v_star: &DMatrix<f64>) -> Result<LatentAlignment> {
    check_shapes(v_hat, v_star)?;
    let n = v_hat.nrows();
    let mut rng = draw_rng(ALIGN_SEED, 0);
    let gram_hat = v_hat * v_hat.transpose();
    let gram_star = v_star * v_star.transpose();
    let starts = [SignFlip::identity(n), spectral_signs(gram_hat.component_mul(&gram_star))]
        .into_iter()
        .chain((0..SIGN_RESTARTS).map(|_| SignFlip::random(n, &mut rng)))
        .collect::<Vec<_>>();
    let (s, o, err) = starts
        .into_iter()
        .map(|s| descend(v_hat, v_star, s))
        .min_by(|a, b| a.2.total_cmp(&b.2))
        .expect("at least one start");
    let scale = v_star.norm();
    Ok(LatentAlignment { signs: s, rotation: Rotation(o), relative_error: err.max(0.0).sqrt() / scale })
}

/// Exhaustive minimum over all `2ⁿ` sign patterns (with optimal `O` for each).
pub fn align_latent_exhaustive(v_hat: &DMatrix<f64>, v_star: &DMatrix<f64>) -> Result<LatentAlignment> {
    check_shapes(v_hat, v_star)?;
    let n = v_hat.nrows();
    if n > 20 {
        return Err(Error::TooLarge { n, max: 20 });
    }
    let (mask, o, err) = (0..1u64 << n)
        .map(|mask| {
            let (o, err) = procrustes(v_hat, v_star, &SignFlip::from_mask(n, mask));
            (mask, o, err)
        })
        .min_by(|a, b| a.2.total_cmp(&b.2))
        .expect("nonempty");
    Ok(LatentAlignment {
        signs: SignFlip::from_mask(n, mask),
        rotation: Rotation(o),
        relative_error: err.max(0.0).sqrt() / v_star.norm(),
    })
}

fn sign_error(l_hat: &DMatrix<f64>, l_star: &DMatrix<f64>, s: &SignFlip) -> f64 {
    (s.conjugate(l_hat) - l_star).norm_squared()
}

/// Single-coordinate greedy passes on `‖S L̂ S − L*‖²` until no flip helps.
fn greedy_signs(l_hat: &DMatrix<f64>, l_star: &DMatrix<f64>, mut s: SignFlip) -> (SignFlip, f64) {
    let n = l_hat.nrows();
    loop {
        let mut changed = false;
        for i in 0..n {
            // change in squared error when s_i flips
            let mut delta = 0.0;
            for j in 0..n {
                if j == i {
                    continue;
                }
                let sij = (s.0[i] * s.0[j]) as f64;
                for (a, b) in [(l_hat[(i, j)], l_star[(i, j)]), (l_hat[(j, i)], l_star[(j, i)])] {
                    delta += (-sij * a - b).powi(2) - (sij * a - b).powi(2);
                }
            }
            if delta < -CONVERGENCE {
                s.flip(i);
                changed = true;
            }
        }
        if !changed {
            let err = sign_error(l_hat, l_star, &s);
            return (s, err);
        }
    }
}

/// `min_S ‖S L̂ S − L*‖_F / ‖L*‖_F` by greedy sign passes from the given
/// start, the identity, a spectral start and random starts.
pub fn kernel_error(l_hat: &DMatrix<f64>, l_star: &DMatrix<f64>, start: Option<&SignFlip>) -> Result<(SignFlip, f64)> {
    check_shapes(l_hat, l_star)?;
    let n = l_hat.nrows();
    let mut rng = draw_rng(ALIGN_SEED, 1);
    let mut starts: Vec<SignFlip> = start.into_iter().cloned().collect();
    starts.push(SignFlip::identity(n));
    let agreement = l_hat.component_mul(l_star);
    starts.push(spectral_signs(&agreement + agreement.transpose()));
    starts.extend((0..SIGN_RESTARTS).map(|_| SignFlip::random(n, &mut rng)));
    let (s, err) = starts
        .into_iter()
        .map(|s| greedy_signs(l_hat, l_star, s))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .expect("at least one start");
    Ok((s, err.sqrt() / l_star.norm()))
}

/// Exhaustive version of [`kernel_error`].
pub fn kernel_error_exhaustive(l_hat: &DMatrix<f64>, l_star: &DMatrix<f64>) -> Result<(SignFlip, f64)> {
    check_shapes(l_hat, l_star)?;
    let n = l_hat.nrows();
    if n > 20 {
        return Err(Error::TooLarge { n, max: 20 });
    }
    let (mask, err) = (0..1u64 << n)
        .map(|m| (m, sign_error(l_hat, l_star, &SignFlip::from_mask(n, m))))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .expect("nonempty");
    Ok((SignFlip::from_mask(n, mask), err.sqrt() / l_star.norm()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub latent: f64,
    pub beta: f64,
    pub gamma: f64,
    /// `None` when either model has no skew part.
    pub skew: Option<f64>,
    pub kernel: f64,
    pub marginal: f64,
    pub conditional: f64,
}

impl ErrorReport {
    pub fn rows(&self) -> Vec<(&'static str, f64)> {
        let mut rows = vec![("V", self.latent), ("B", self.beta), ("gamma", self.gamma)];
        if let Some(c) = self.skew {
            rows.push(("C", c));
        }
        rows.extend([("L", self.kernel), ("marginal", self.marginal), ("conditional", self.conditional)]);
        rows
    }
}

fn same_shape(fit: &ModelParams, truth: &ModelParams) -> Result<()> {
    if fit.n() != truth.n() || fit.d() != truth.d() {
        return Err(Error::Dimension(format!(
            "fit is {}x{}, truth is {}x{}",
            fit.n(),
            fit.d(),
            truth.n(),
            truth.d()
        )));
    }
    Ok(())
}

/// Relative errors of every parameter block, the kernel and the
/// probabilities after alignment.
pub fn aligned_errors(fit: &ModelParams, truth: &ModelParams) -> Result<ErrorReport> {
    same_shape(fit, truth)?;
    let align = align_latent(fit.latent(), truth.latent())?;
    let beta = (fit.beta() - truth.beta()).norm() / truth.beta().norm();
    let gamma = if truth.gamma() == 0.0 {
        fit.gamma().abs()
    } else {
        (fit.gamma() - truth.gamma()).abs() / truth.gamma()
    };
    // V̂ ≈ S V* O pairs with Ĉ ≈ Oᵀ C* O, so C* is compared with O Ĉ Oᵀ.
    let skew = match (fit.skew(), truth.skew()) {
        (Some(c_hat), Some(c_star)) => {
            let o = align.rotation.matrix();
            let c_star = c_star.to_dense();
            Some((o * c_hat.to_dense() * o.transpose() - &c_star).norm() / c_star.norm())
        }
        _ => None,
    };
    let l_hat = build_kernel(fit);
    let l_star = build_kernel(truth);
    let (_, kernel) = kernel_error(l_hat.matrix(), l_star.matrix(), Some(&align.signs))?;
    let (marginal, conditional) = probability_errors(fit, truth)?;
    Ok(ErrorReport {
        latent: align.relative_error,
        beta,
        gamma,
        skew,
        kernel,
        marginal,
        conditional,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbabilityErrors {
    pub marginal: f64,
    pub conditional: f64,
    /// Reference probabilities skipped for being below [`MIN_PROBABILITY`].
    pub skipped: usize,
}

/// Mean relative error of `pr(i ∈ E)` over nodes and of
/// `pr(j ∈ E | i ∈ E)` over ordered pairs `i ≠ j`.
pub fn probability_error_details(fit: &ModelParams, truth: &ModelParams) -> Result<ProbabilityErrors> {
    if fit.n() != truth.n() {
        return Err(Error::Dimension(format!("fit has {} nodes, truth has {}", fit.n(), truth.n())));
    }
    let k_hat = marginal_kernel(&build_kernel(fit))?;
    let k_star = marginal_kernel(&build_kernel(truth))?;
    marginal_kernel_errors(&k_hat, &k_star)
}

pub fn marginal_kernel_errors(k_hat: &MarginalKernel, k_star: &MarginalKernel) -> Result<ProbabilityErrors> {
    let n = k_star.n();
    let mut skipped = 0;
    let mut marginal = Vec::with_capacity(n);
    for i in 0..n {
        let p = k_star.inclusion(i);
        if p < MIN_PROBABILITY {
            skipped += 1;
            continue;
        }
        marginal.push((k_hat.inclusion(i) - p).abs() / p);
    }
    let mut conditional = Vec::with_capacity(n * n.saturating_sub(1));
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let p = match pairwise_conditional(k_star, i, j) {
                Ok(p) if p >= MIN_PROBABILITY => p,
                _ => {
                    skipped += 1;
                    continue;
                }
            };
            let p_hat = pairwise_conditional(k_hat, i, j)?;
            conditional.push((p_hat - p).abs() / p);
        }
    }
    if skipped > 0 {
        log::warn!("{skipped} reference probabilities below {MIN_PROBABILITY:e} were skipped");
    }
    let mean = |v: &[f64]| if v.is_empty() { 0.0 } else { v.iter().sum::<f64>() / v.len() as f64 };
    Ok(ProbabilityErrors { marginal: mean(&marginal), conditional: mean(&conditional), skipped })
}

pub fn probability_errors(fit: &ModelParams, truth: &ModelParams) -> Result<(f64, f64)> {
    let e = probability_error_details(fit, truth)?;
    Ok((e.marginal, e.conditional))
}

/// One CSV row for the experiment runner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub metric: String,
    pub value: f64,
    pub seed: u64,
    pub m: usize,
    pub d: usize,
    pub s: f64,
}

pub const METRIC_CSV_HEADER: &str = "metric,value,seed,m,d,s";

impl MetricRow {
    pub fn to_csv(&self) -> String {
        format!("{},{},{},{},{},{}", self.metric, self.value, self.seed, self.m, self.d, self.s)
    }
}

pub fn report_rows(report: &ErrorReport, seed: u64, m: usize, d: usize, s: f64) -> Vec<MetricRow> {
    report
        .rows()
        .into_iter()
        .map(|(metric, value)| MetricRow { metric: metric.to_string(), value, seed, m, d, s })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{brute_force_distribution, KernelMatrix};
    use crate::synth::random_params;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn params(n: usize, d: usize, seed: u64) -> ModelParams {
        random_params(n, d, (0.5, 1.5), (0.1, 1.0), &mut rng(seed)).unwrap()
    }

    #[test]
    fn recovers_exact_group_element() {
        let mut r = rng(3);
        for seed in 0..50 {
            let n = r.random_range(3..20);
            let d = r.random_range(2..5);
            let truth = params(n, d, seed);
            let s = SignFlip::random(n, &mut r);
            let o = Rotation::random(d, &mut r);
            let v_hat = s.apply_rows(truth.latent()) * o.matrix();
            let a = align_latent(&v_hat, truth.latent()).unwrap();
            assert!(a.relative_error < 1e-10, "seed {seed}: {}", a.relative_error);
            let l_hat = s.conjugate(build_kernel(&truth).matrix());
            let (_, k) = kernel_error(&l_hat, build_kernel(&truth).matrix(), None).unwrap();
            assert!(k < 1e-12, "seed {seed}: {k}");
        }
    }

    #[test]
    fn identical_latent_has_zero_error() {
        let truth = params(6, 2, 2);
        let a = align_latent(truth.latent(), truth.latent()).unwrap();
        assert!(a.relative_error < 1e-12);
        assert!((a.rotation.matrix() - DMatrix::<f64>::identity(2, 2)).norm() < 1e-10);
        assert!(a.signs.signs().iter().all(|&s| s == 1));
    }

    #[test]
    fn small_pair_matches_exhaustive() {
        for seed in 0..10 {
            let a = params(4, 2, 10 + seed);
            let b = params(4, 2, 100 + seed);
            let h = align_latent(a.latent(), b.latent()).unwrap();
            let e = align_latent_exhaustive(a.latent(), b.latent()).unwrap();
            assert!((h.relative_error - e.relative_error).abs() < 1e-8, "seed {seed}");
        }
    }

    #[test]
    fn transformed_copy_has_zero_errors() {
        let mut r = rng(5);
        let truth = params(8, 3, 4);
        let s = SignFlip::random(8, &mut r);
        let o = Rotation::random(3, &mut r);
        let fit = truth.transformed(&s.as_f64(), o.matrix()).unwrap();
        let rep = aligned_errors(&fit, &truth).unwrap();
        for (name, v) in rep.rows() {
            assert!(v < 1e-8, "{name} = {v}");
        }
    }

    #[test]
    fn doubled_beta_gives_unit_beta_error() {
        let truth = params(5, 2, 6);
        let fit = truth.with_beta(truth.beta() * 2.0).unwrap();
        let rep = aligned_errors(&fit, &truth).unwrap();
        assert!((rep.beta - 1.0).abs() < 1e-15);
        assert!(rep.latent < 1e-12 && rep.gamma == 0.0 && rep.skew.unwrap() < 1e-12);
    }

    #[test]
    fn kernel_error_matches_exhaustive() {
        for seed in 0..10 {
            let l_hat = build_kernel(&params(5, 3, 20 + seed));
            let l_star = build_kernel(&params(5, 3, 200 + seed));
            let (_, h) = kernel_error(l_hat.matrix(), l_star.matrix(), None).unwrap();
            let (_, e) = kernel_error_exhaustive(l_hat.matrix(), l_star.matrix()).unwrap();
            assert!((h - e).abs() < 1e-8, "seed {seed}: {h} vs {e}");
        }
    }

    #[test]
    fn probability_errors_vanish_on_truth() {
        let truth = params(6, 3, 7);
        assert_eq!(probability_errors(&truth, &truth).unwrap(), (0.0, 0.0));
        let mut r = rng(8);
        let s = SignFlip::random(6, &mut r);
        let fit = truth.transformed(&s.as_f64(), Rotation::random(3, &mut r).matrix()).unwrap();
        let (m, c) = probability_errors(&fit, &truth).unwrap();
        assert!(m < 1e-10 && c < 1e-10);
    }

    fn brute_errors(fit: &KernelMatrix, truth: &KernelMatrix) -> (f64, f64) {
        let f = brute_force_distribution(fit).unwrap();
        let t = brute_force_distribution(truth).unwrap();
        let n = fit.n();
        let marg: f64 = (0..n).map(|i| (f.inclusion(i) - t.inclusion(i)).abs() / t.inclusion(i)).sum::<f64>() / n as f64;
        let mut cond = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    let pair = crate::hyperedge::Hyperedge::from([i, j]);
                    let pf = f.superset_mass(&pair) / f.inclusion(i);
                    let pt = t.superset_mass(&pair) / t.inclusion(i);
                    cond += (pf - pt).abs() / pt;
                }
            }
        }
        (marg, cond / (n * (n - 1)) as f64)
    }

    #[test]
    fn probability_errors_match_enumeration() {
        let fit = params(6, 3, 30);
        let truth = params(6, 3, 31);
        let (m, c) = probability_errors(&fit, &truth).unwrap();
        let (bm, bc) = brute_errors(&build_kernel(&fit), &build_kernel(&truth));
        assert!((m - bm).abs() < 1e-8 && (c - bc).abs() < 1e-8);
    }

    #[test]
    fn shape_mismatch_rejected() {
        assert!(aligned_errors(&params(5, 3, 1), &params(6, 3, 1)).is_err());
        assert!(align_latent(&DMatrix::zeros(3, 2), &DMatrix::zeros(3, 3)).is_err());
    }

    #[test]
    fn rotation_validation() {
        assert!(Rotation::new(DMatrix::from_element(2, 2, 1.0)).is_err());
        let o = Rotation::random(4, &mut rng(1));
        assert!(Rotation::new(o.matrix().clone()).is_ok());
        assert!(SignFlip::new(vec![1, 0]).is_err());
    }
}
