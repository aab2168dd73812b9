//! Kernel matrices and exact hyperedge probabilities.
//!
//! `pr(E = e) = det(L_e) / det(L + I)` and the marginal kernel
//! `K = I - (L + I)⁻¹` with `pr(e ⊆ E) = det(K_e)`.

use log::warn;
use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::hyperedge::Hyperedge;
use crate::linalg::{self, LogDet, Lu};
use crate::params::ModelParams;

/// Largest ground set `brute_force_distribution` will enumerate.
pub const MAX_ENUMERATION: usize = 14;

/// Relative slack used by the admissibility check.
pub const ADMISSIBILITY_TOLERANCE: f64 = 1e-8;

/// An `n × n` kernel `L`.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelMatrix {
    l: DMatrix<f64>,
}

impl KernelMatrix {
    /// Wraps an arbitrary square matrix. Admissibility is not enforced here;
    /// see [`KernelMatrix::is_admissible`].
    pub fn from_matrix(l: DMatrix<f64>) -> Result<Self> {
        if l.nrows() != l.ncols() {
            return Err(Error::Dimension(format!("kernel must be square, got {}x{}", l.nrows(), l.ncols())));
        }
        if l.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("kernel has non-finite entries".into()));
        }
        Ok(KernelMatrix { l })
    }

    pub fn n(&self) -> usize {
        self.l.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.l
    }

    /// `L + Lᵀ` positive semidefinite up to `tol · ‖L‖_F`, which is
    /// sufficient for all principal minors to be nonnegative.
    pub fn is_admissible(&self, tol: f64) -> bool {
        if self.n() == 0 {
            return true;
        }
        // min eigenvalue of (L + Lᵀ) is twice that of the symmetric part
        2.0 * linalg::min_symmetric_eigenvalue(&self.l) >= -tol * self.l.norm()
    }

    pub fn principal_log_det(&self, e: &Hyperedge) -> LogDet {
        linalg::log_det(&linalg::principal_submatrix(&self.l, e.nodes()))
    }

    /// `log det(L + I)`.
    pub fn log_normalizer(&self) -> LogDet {
        linalg::log_det(&(&self.l + DMatrix::identity(self.n(), self.n())))
    }
}

/// Builds `L = B V (I + γC) Vᵀ B + B²`.
pub fn build_kernel(params: &ModelParams) -> KernelMatrix {
    let beta = params.beta();
    let mut u = params.latent().clone();
    for (i, mut row) in u.row_iter_mut().enumerate() {
        row *= beta[i];
    }
    let mut l = &u * params.core() * u.transpose();
    for i in 0..params.n() {
        l[(i, i)] += beta[i] * beta[i];
    }
    KernelMatrix { l }
}

/// `log pr(E = e)`. Returns `-∞` (with a warning) when the principal
/// minor is not positive in floating point.
pub fn log_prob_exact(kernel: &KernelMatrix, e: &Hyperedge) -> Result<f64> {
    e.check_range(kernel.n())?;
    let norm = kernel.log_normalizer();
    let Some(log_norm) = norm.positive_log() else {
        return Err(Error::IllConditioned(format!("det(L + I) = {:e} is not positive", norm.value())));
    };
    let minor = kernel.principal_log_det(e);
    match minor.positive_log() {
        Some(v) => Ok(v - log_norm),
        None => {
            warn!("det(L_e) = {:e} for edge [{e}] is not positive; returning -inf", minor.value());
            Ok(f64::NEG_INFINITY)
        }
    }
}

/// Unnormalized probability of the pair `{i, j}`:
/// `4βᵢ²βⱼ² − βᵢ²βⱼ² cos²(vᵢ, vⱼ) + γ² βᵢ²βⱼ² (vᵢᵀ C vⱼ)²`.
pub fn two_node_closed_form(params: &ModelParams, i: usize, j: usize) -> Result<f64> {
    let n = params.n();
    for node in [i, j] {
        if node >= n {
            return Err(Error::NodeOutOfRange { node, n });
        }
    }
    if i == j {
        return Err(Error::InvalidArgument("two-node probability needs distinct nodes".into()));
    }
    let v = params.latent();
    let (vi, vj) = (v.row(i), v.row(j));
    let cos = vi.dot(&vj);
    let cross = match params.skew() {
        Some(c) => (vi * c.to_dense() * vj.transpose())[(0, 0)],
        None => 0.0,
    };
    let bb = (params.beta()[i] * params.beta()[j]).powi(2);
    let g = params.gamma();
    Ok(4.0 * bb - bb * cos * cos + g * g * bb * cross * cross)
}

/// Marginal kernel `K = I − (L + I)⁻¹`; `K_ii = pr(i ∈ E)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginalKernel {
    k: DMatrix<f64>,
}

impl MarginalKernel {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.k
    }

    pub fn n(&self) -> usize {
        self.k.nrows()
    }

    pub fn inclusion(&self, i: usize) -> f64 {
        self.k[(i, i)]
    }

    /// `pr(e ⊆ E) = det(K_e)`.
    pub fn inclusion_of(&self, e: &Hyperedge) -> f64 {
        linalg::log_det(&linalg::principal_submatrix(&self.k, e.nodes())).value()
    }
}

pub fn marginal_kernel(kernel: &KernelMatrix) -> Result<MarginalKernel> {
    let n = kernel.n();
    let shifted = kernel.matrix() + DMatrix::identity(n, n);
    let inv = Lu::new(shifted)
        .inverse()
        .ok_or_else(|| Error::IllConditioned("L + I is singular".into()))?;
    Ok(MarginalKernel { k: DMatrix::identity(n, n) - inv })
}

/// Inclusion below this is treated as zero when conditioning on a node.
pub const CONDITIONAL_TOLERANCE: f64 = 1e-14;

/// `pr(j ∈ E | i ∈ E) = det(K_{{i,j}}) / K_ii`.
pub fn pairwise_conditional(k: &MarginalKernel, i: usize, j: usize) -> Result<f64> {
    let n = k.n();
    for node in [i, j] {
        if node >= n {
            return Err(Error::NodeOutOfRange { node, n });
        }
    }
    if i == j {
        return Err(Error::InvalidArgument("pairwise conditional needs distinct nodes".into()));
    }
    let m = k.matrix();
    let kii = m[(i, i)];
    if kii <= CONDITIONAL_TOLERANCE {
        return Err(Error::UndefinedConditional { node: i, value: kii });
    }
    Ok((kii * m[(j, j)] - m[(i, j)] * m[(j, i)]) / kii)
}

/// `pr(E = e₂ | e₁ ⊆ E) = det(L_{e₂}) / det(L + I − I_{e₁})` for `e₁ ⊆ e₂`.
pub fn conditional_exact(kernel: &KernelMatrix, e1: &Hyperedge, e2: &Hyperedge) -> Result<f64> {
    e2.check_range(kernel.n())?;
    if !e1.is_subset_of(e2) {
        return Err(Error::InvalidArgument(format!("conditioning set [{e1}] is not contained in [{e2}]")));
    }
    let n = kernel.n();
    let mut denom = kernel.matrix() + DMatrix::identity(n, n);
    for &i in e1.nodes() {
        denom[(i, i)] -= 1.0;
    }
    let lu = Lu::new(denom);
    let d = lu.det();
    if lu.is_singular() || d == 0.0 {
        return Err(Error::IllConditioned(format!("det(L + I − I_e1) vanishes for e1 = [{e1}]")));
    }
    Ok(kernel.principal_log_det(e2).value() / d)
}

/// Exact distribution over all `2ⁿ` subsets, indexed by bitmask.
#[derive(Debug, Clone)]
pub struct SubsetDistribution {
    n: usize,
    probs: Vec<f64>,
    normalizer: f64,
}

impl SubsetDistribution {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob(&self, e: &Hyperedge) -> f64 {
        self.probs[e.to_mask() as usize]
    }

    /// `det(L + I)` as computed directly.
    pub fn normalizer(&self) -> f64 {
        self.normalizer
    }

    /// `Σ_e det(L_e)`, which should equal the normalizer.
    pub fn minor_sum(&self) -> f64 {
        self.probs.iter().sum::<f64>() * self.normalizer
    }

    pub fn iter(&self) -> impl Iterator<Item = (Hyperedge, f64)> + '_ {
        self.probs.iter().enumerate().map(|(m, &p)| (Hyperedge::from_mask(m as u64), p))
    }

    /// `Σ_{e ∋ i} pr(e)`.
    pub fn inclusion(&self, i: usize) -> f64 {
        self.masked_sum(1 << i)
    }

    /// `Σ_{e ⊇ s} pr(e)`.
    pub fn superset_mass(&self, s: &Hyperedge) -> f64 {
        self.masked_sum(s.to_mask() as usize)
    }

    fn masked_sum(&self, mask: usize) -> f64 {
        self.probs.iter().enumerate().filter(|(m, _)| m & mask == mask).map(|(_, p)| p).sum()
    }

    pub fn mean_size(&self) -> f64 {
        self.probs.iter().enumerate().map(|(m, p)| m.count_ones() as f64 * p).sum()
    }
}

pub fn brute_force_distribution(kernel: &KernelMatrix) -> Result<SubsetDistribution> {
    let n = kernel.n();
    if n > MAX_ENUMERATION {
        return Err(Error::TooLarge { n, max: MAX_ENUMERATION });
    }
    let normalizer = kernel.log_normalizer().value();
    let probs = (0..1usize << n)
        .map(|m| kernel.principal_log_det(&Hyperedge::from_mask(m as u64)).value() / normalizer)
        .collect();
    Ok(SubsetDistribution { n, probs, normalizer })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::SkewMatrix;
    use approx::assert_relative_eq;
    use nalgebra::DVector;
    use std::f64::consts::FRAC_1_SQRT_2;

    fn c2() -> SkewMatrix {
        SkewMatrix::from_upper(2, vec![FRAC_1_SQRT_2]).unwrap()
    }

    fn two_node_params() -> ModelParams {
        ModelParams::new(
            DVector::from_element(2, 1.0),
            DMatrix::identity(2, 2),
            Some(c2()),
            1.0,
        )
        .unwrap()
    }

    fn one_node() -> KernelMatrix {
        KernelMatrix::from_matrix(DMatrix::from_element(1, 1, 2.0)).unwrap()
    }

    #[test]
    fn single_node_kernel_is_two() {
        let p = ModelParams::new(
            DVector::from_element(1, 1.0),
            DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
            Some(c2()),
            0.5,
        )
        .unwrap();
        assert_relative_eq!(build_kernel(&p).matrix()[(0, 0)], 2.0, epsilon = 1e-15);
    }

    #[test]
    fn two_node_kernel_by_hand() {
        let l = build_kernel(&two_node_params());
        let expected = DMatrix::from_row_slice(2, 2, &[2.0, FRAC_1_SQRT_2, -FRAC_1_SQRT_2, 2.0]);
        assert_relative_eq!(l.matrix(), &expected, epsilon = 1e-15);
        // antisymmetric part equals γ B V C Vᵀ B, by a plain triple product
        let c = c2().to_dense();
        let anti = (l.matrix() - l.matrix().transpose()) * 0.5;
        assert_relative_eq!(anti, c, epsilon = 1e-15);
    }

    #[test]
    fn zero_gamma_gives_symmetric_kernel() {
        let p = ModelParams::new(
            DVector::from_vec(vec![0.7, 1.3, 2.0]),
            DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.6, 0.8, 0.0, 1.0]),
            Some(c2()),
            0.0,
        )
        .unwrap();
        let l = build_kernel(&p);
        assert_eq!(l.matrix(), &l.matrix().transpose());
    }

    #[test]
    fn one_node_log_probs() {
        let l = one_node();
        assert_relative_eq!(log_prob_exact(&l, &Hyperedge::from([0])).unwrap(), (2.0f64 / 3.0).ln(), epsilon = 1e-15);
        assert_relative_eq!(log_prob_exact(&l, &Hyperedge::empty()).unwrap(), (1.0f64 / 3.0).ln(), epsilon = 1e-15);
    }

    #[test]
    fn two_node_log_prob() {
        let l = build_kernel(&two_node_params());
        let got = log_prob_exact(&l, &Hyperedge::from([0, 1])).unwrap();
        assert_relative_eq!(got, (4.5f64 / 9.5).ln(), epsilon = 1e-14);
        // plain 2x2 determinant cross-check
        let m = l.matrix();
        assert_relative_eq!(m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)], 4.5, epsilon = 1e-14);
    }

    #[test]
    fn non_positive_minor_gives_neg_infinity() {
        let l = KernelMatrix::from_matrix(DMatrix::from_row_slice(2, 2, &[0.5, 1.0, 1.0, 0.5])).unwrap();
        assert_eq!(log_prob_exact(&l, &Hyperedge::from([0, 1])).unwrap(), f64::NEG_INFINITY);
        assert!(!l.is_admissible(ADMISSIBILITY_TOLERANCE));
    }

    #[test]
    fn closed_form_examples() {
        let orth = ModelParams::symmetric(DVector::from_element(2, 1.0), DMatrix::identity(2, 2)).unwrap();
        assert_relative_eq!(two_node_closed_form(&orth, 0, 1).unwrap(), 4.0);
        let same = ModelParams::symmetric(
            DVector::from_element(2, 1.0),
            DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 1.0, 0.0]),
        )
        .unwrap();
        assert_relative_eq!(two_node_closed_form(&same, 0, 1).unwrap(), 3.0);
        assert_relative_eq!(two_node_closed_form(&two_node_params(), 0, 1).unwrap(), 4.5, epsilon = 1e-14);
        assert!(two_node_closed_form(&orth, 1, 1).is_err());
    }

    #[test]
    fn marginal_kernel_examples() {
        let k = marginal_kernel(&one_node()).unwrap();
        assert_relative_eq!(k.matrix()[(0, 0)], 2.0 / 3.0, epsilon = 1e-15);
        let sym = KernelMatrix::from_matrix(DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0])).unwrap();
        let k = marginal_kernel(&sym).unwrap();
        assert_relative_eq!(k.matrix()[(0, 1)], k.matrix()[(1, 0)], epsilon = 1e-15);
        let singular = KernelMatrix::from_matrix(DMatrix::from_element(1, 1, -1.0)).unwrap();
        assert!(matches!(marginal_kernel(&singular), Err(Error::IllConditioned(_))));
    }

    #[test]
    fn pairwise_conditional_special_cases() {
        let l = KernelMatrix::from_matrix(DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 3.0]))).unwrap();
        let k = marginal_kernel(&l).unwrap();
        assert_relative_eq!(pairwise_conditional(&k, 0, 1).unwrap(), 0.75, epsilon = 1e-15);

        let sym = KernelMatrix::from_matrix(DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0])).unwrap();
        let k = marginal_kernel(&sym).unwrap();
        let m = k.matrix();
        let expected = m[(1, 1)] - m[(0, 1)].powi(2) / m[(0, 0)];
        assert_relative_eq!(pairwise_conditional(&k, 0, 1).unwrap(), expected, epsilon = 1e-15);

        let zero = marginal_kernel(&KernelMatrix::from_matrix(DMatrix::zeros(2, 2)).unwrap()).unwrap();
        assert!(matches!(pairwise_conditional(&zero, 0, 1), Err(Error::UndefinedConditional { node: 0, .. })));
    }

    #[test]
    fn conditional_exact_examples() {
        let l = one_node();
        let e = Hyperedge::from([0]);
        assert_relative_eq!(conditional_exact(&l, &e, &e).unwrap(), 1.0, epsilon = 1e-15);
        let l2 = build_kernel(&two_node_params());
        let e2 = Hyperedge::from([0, 1]);
        let direct = log_prob_exact(&l2, &e2).unwrap().exp();
        assert_relative_eq!(conditional_exact(&l2, &Hyperedge::empty(), &e2).unwrap(), direct, epsilon = 1e-14);
        assert!(conditional_exact(&l2, &Hyperedge::from([1]), &Hyperedge::from([0])).is_err());
    }

    #[test]
    fn brute_force_examples() {
        let dist = brute_force_distribution(&one_node()).unwrap();
        assert_relative_eq!(dist.probabilities()[0], 1.0 / 3.0, epsilon = 1e-15);
        assert_relative_eq!(dist.probabilities()[1], 2.0 / 3.0, epsilon = 1e-15);

        let dist = brute_force_distribution(&build_kernel(&two_node_params())).unwrap();
        let expected = [1.0 / 9.5, 2.0 / 9.5, 2.0 / 9.5, 4.5 / 9.5];
        for (p, q) in dist.probabilities().iter().zip(expected) {
            assert_relative_eq!(*p, q, epsilon = 1e-14);
        }
        assert_relative_eq!(dist.minor_sum(), dist.normalizer(), max_relative = 1e-12);

        let big = KernelMatrix::from_matrix(DMatrix::identity(15, 15)).unwrap();
        assert!(matches!(brute_force_distribution(&big), Err(Error::TooLarge { n: 15, .. })));
    }
}
