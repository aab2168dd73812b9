//! Model parameters `(β, V, C, γ)` and their manifold constraints.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Default upper bound `T` on the skew scale `γ`.
pub const DEFAULT_GAMMA_MAX: f64 = 10.0;

/// Tolerance used when checking unit norms on construction or load.
pub const NORM_TOLERANCE: f64 = 1e-10;

/// Skew-symmetric `d × d` matrix stored as its strict upper triangle
/// (row-major), so `Cᵀ = -C` holds by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct SkewMatrix {
    dim: usize,
    upper: Vec<f64>,
}

impl SkewMatrix {
    pub fn upper_len(dim: usize) -> usize {
        dim * dim.saturating_sub(1) / 2
    }

    pub fn from_upper(dim: usize, upper: Vec<f64>) -> Result<Self> {
        if upper.len() != Self::upper_len(dim) {
            return Err(Error::Dimension(format!(
                "skew matrix of dimension {dim} needs {} upper entries, got {}",
                Self::upper_len(dim),
                upper.len()
            )));
        }
        if upper.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParams("skew matrix has non-finite entries".into()));
        }
        Ok(SkewMatrix { dim, upper })
    }

    /// Takes the skew part `(C - Cᵀ) / 2` of an arbitrary square matrix.
    pub fn skew_part(c: &DMatrix<f64>) -> Result<Self> {
        if c.nrows() != c.ncols() {
            return Err(Error::Dimension("skew matrix must be square".into()));
        }
        let d = c.nrows();
        let mut upper = Vec::with_capacity(Self::upper_len(d));
        for k in 0..d {
            for l in k + 1..d {
                upper.push(0.5 * (c[(k, l)] - c[(l, k)]));
            }
        }
        Self::from_upper(d, upper)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn frobenius_norm(&self) -> f64 {
        (2.0 * self.upper.iter().map(|v| v * v).sum::<f64>()).sqrt()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        SkewMatrix { dim: self.dim, upper: self.upper.iter().map(|v| v * factor).collect() }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut c = DMatrix::zeros(self.dim, self.dim);
        let mut it = self.upper.iter();
        for k in 0..self.dim {
            for l in k + 1..self.dim {
                let v = *it.next().unwrap();
                c[(k, l)] = v;
                c[(l, k)] = -v;
            }
        }
        c
    }
}

/// Parameters of the hypergraph model
/// `L = B V (I + γC) Vᵀ B + B²` with `B = diag(β)`.
///
/// `skew == None` is the symmetric special case (`γ = 0`, no `C`).
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    beta: DVector<f64>,
    latent: DMatrix<f64>,
    skew: Option<SkewMatrix>,
    gamma: f64,
    gamma_max: f64,
}

impl ModelParams {
    pub fn new(
        beta: DVector<f64>,
        latent: DMatrix<f64>,
        skew: Option<SkewMatrix>,
        gamma: f64,
    ) -> Result<Self> {
        Self::with_gamma_max(beta, latent, skew, gamma, DEFAULT_GAMMA_MAX)
    }

    pub fn symmetric(beta: DVector<f64>, latent: DMatrix<f64>) -> Result<Self> {
        Self::new(beta, latent, None, 0.0)
    }

    pub fn with_gamma_max(
        beta: DVector<f64>,
        latent: DMatrix<f64>,
        skew: Option<SkewMatrix>,
        gamma: f64,
        gamma_max: f64,
    ) -> Result<Self> {
        let p = ModelParams { beta, latent, skew, gamma, gamma_max };
        p.validate()?;
        Ok(p)
    }

    fn validate(&self) -> Result<()> {
        let n = self.latent.nrows();
        let d = self.latent.ncols();
        if n == 0 {
            return Err(Error::InvalidParams("node count must be positive".into()));
        }
        if d < 2 {
            return Err(Error::InvalidParams(format!(
                "latent dimension must be at least 2 (got {d}); no unit-norm skew matrix exists for d = 1"
            )));
        }
        if self.beta.len() != n {
            return Err(Error::Dimension(format!("beta has {} entries, V has {n} rows", self.beta.len())));
        }
        if self.beta.iter().chain(self.latent.iter()).any(|v| !v.is_finite())
            || !self.gamma.is_finite()
        {
            return Err(Error::InvalidParams("non-finite parameter entries".into()));
        }
        if let Some(i) = self.beta.iter().position(|&b| b <= 0.0) {
            return Err(Error::InvalidParams(format!("beta[{i}] = {} is not positive", self.beta[i])));
        }
        for (i, row) in self.latent.row_iter().enumerate() {
            let norm = row.norm();
            if (norm - 1.0).abs() > NORM_TOLERANCE {
                return Err(Error::InvalidParams(format!(
                    "latent row {i} has norm {norm}, expected unit norm"
                )));
            }
        }
        if !(self.gamma_max.is_finite() && self.gamma_max >= 0.0) {
            return Err(Error::InvalidParams("gamma bound must be finite and non-negative".into()));
        }
        if self.gamma < 0.0 || self.gamma > self.gamma_max {
            return Err(Error::InvalidParams(format!(
                "gamma = {} outside [0, {}]",
                self.gamma, self.gamma_max
            )));
        }
        match &self.skew {
            Some(c) => {
                if c.dim() != d {
                    return Err(Error::Dimension(format!("C is {}x{}, latent dimension is {d}", c.dim(), c.dim())));
                }
                let norm = c.frobenius_norm();
                if (norm - 1.0).abs() > NORM_TOLERANCE {
                    return Err(Error::InvalidParams(format!(
                        "skew matrix has Frobenius norm {norm}, expected 1"
                    )));
                }
            }
            None if self.gamma != 0.0 => {
                return Err(Error::InvalidParams("gamma must be 0 when no skew matrix is present".into()));
            }
            None => {}
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.latent.nrows()
    }

    pub fn d(&self) -> usize {
        self.latent.ncols()
    }

    pub fn beta(&self) -> &DVector<f64> {
        &self.beta
    }

    pub fn latent(&self) -> &DMatrix<f64> {
        &self.latent
    }

    pub fn skew(&self) -> Option<&SkewMatrix> {
        self.skew.as_ref()
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn gamma_max(&self) -> f64 {
        self.gamma_max
    }

    pub fn is_symmetric(&self) -> bool {
        self.skew.is_none() || self.gamma == 0.0
    }

    /// `M = I + γC`, the `d × d` core of the kernel.
    pub fn core(&self) -> DMatrix<f64> {
        let mut m = DMatrix::identity(self.d(), self.d());
        if let Some(c) = &self.skew {
            m += c.to_dense() * self.gamma;
        }
        m
    }

    /// Copy with `V ← S V O` and `C ← Oᵀ C O`; the kernel becomes `S L S`.
    pub fn transformed(&self, signs: &[f64], rotation: &DMatrix<f64>) -> Result<Self> {
        if signs.len() != self.n() || rotation.shape() != (self.d(), self.d()) {
            return Err(Error::Dimension("transform does not match parameter shapes".into()));
        }
        let mut latent = &self.latent * rotation;
        for (i, mut row) in latent.row_iter_mut().enumerate() {
            row *= signs[i];
        }
        let skew = match &self.skew {
            Some(c) => Some(SkewMatrix::skew_part(&(rotation.transpose() * c.to_dense() * rotation))?),
            None => None,
        };
        // Re-normalize away rounding so the invariants hold exactly.
        for mut row in latent.row_iter_mut() {
            let norm = row.norm();
            row /= norm;
        }
        let skew = skew.map(|c| {
            let norm = c.frobenius_norm();
            c.scaled(1.0 / norm)
        });
        Self::with_gamma_max(self.beta.clone(), latent, skew, self.gamma, self.gamma_max)
    }

    /// Same parameters with `β` replaced.
    pub fn with_beta(&self, beta: DVector<f64>) -> Result<Self> {
        Self::with_gamma_max(beta, self.latent.clone(), self.skew.clone(), self.gamma, self.gamma_max)
    }
}
