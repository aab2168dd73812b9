//! Ground-truth parameter generators for simulation studies.
//!
//! Latent rows come from `Uniform[0,1]^d` (then normalized) or from a von
//! Mises-Fisher mixture with round-robin cluster assignment; `C` is the
//! normalized skew part of a `Uniform[0,1]` matrix; popularity is
//! `βᵢ = 15 s (0.2 ηᵢ + 0.05)` with `ηᵢ ~ Beta(1, 4)`.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::{ModelParams, SkewMatrix, DEFAULT_GAMMA_MAX};

pub const DEFAULT_GAMMA: f64 = 0.15;
pub const DEFAULT_KAPPA: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LatentLaw {
    Uniform,
    /// Means default to the canonical axes of `ℝ³` when empty.
    Vmf { kappa: f64, means: Vec<Vec<f64>> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSpec {
    pub n: usize,
    pub d: usize,
    pub latent_law: LatentLaw,
    pub s: f64,
    pub gamma: f64,
    pub seed: u64,
}

impl ScenarioSpec {
    pub fn uniform(n: usize, d: usize, s: f64, seed: u64) -> Self {
        ScenarioSpec { n, d, latent_law: LatentLaw::Uniform, s, gamma: DEFAULT_GAMMA, seed }
    }

    pub fn vmf(n: usize, s: f64, seed: u64) -> Self {
        ScenarioSpec {
            n,
            d: 3,
            latent_law: LatentLaw::Vmf { kappa: DEFAULT_KAPPA, means: Vec::new() },
            s,
            gamma: DEFAULT_GAMMA,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidArgument("n must be positive".into()));
        }
        if self.d < 2 {
            return Err(Error::InvalidArgument("d must be at least 2".into()));
        }
        if !(self.s > 0.0 && self.s.is_finite()) {
            return Err(Error::InvalidArgument(format!("scaling s = {} must be positive", self.s)));
        }
        if !(0.0..=DEFAULT_GAMMA_MAX).contains(&self.gamma) {
            return Err(Error::InvalidArgument(format!("gamma = {} outside [0, {DEFAULT_GAMMA_MAX}]", self.gamma)));
        }
        if let LatentLaw::Vmf { kappa, means } = &self.latent_law {
            if !(*kappa >= 0.0 && kappa.is_finite()) {
                return Err(Error::InvalidArgument("kappa must be finite and non-negative".into()));
            }
            if means.is_empty() && self.d != 3 {
                return Err(Error::InvalidArgument(format!(
                    "vMF with the canonical means needs d = 3, got d = {}",
                    self.d
                )));
            }
            if means.iter().any(|m| m.len() != self.d) {
                return Err(Error::InvalidArgument("vMF mean directions must have length d".into()));
            }
        }
        Ok(())
    }

    /// Parses the structured-text form with keys
    /// `n, d, s, latent_law, kappa, gamma, seed`.
    pub fn from_toml(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct Raw {
            n: usize,
            d: usize,
            s: f64,
            latent_law: String,
            kappa: Option<f64>,
            gamma: Option<f64>,
            seed: u64,
        }
        let raw: Raw = toml::from_str(text).map_err(|e| Error::Data(format!("scenario spec: {e}")))?;
        let latent_law = match raw.latent_law.as_str() {
            "uniform" => LatentLaw::Uniform,
            "vmf" => LatentLaw::Vmf { kappa: raw.kappa.unwrap_or(DEFAULT_KAPPA), means: Vec::new() },
            other => return Err(Error::InvalidArgument(format!("unknown latent_law '{other}'"))),
        };
        let spec = ScenarioSpec {
            n: raw.n,
            d: raw.d,
            latent_law,
            s: raw.s,
            gamma: raw.gamma.unwrap_or(DEFAULT_GAMMA),
            seed: raw.seed,
        };
        spec.validate()?;
        Ok(spec)
    }
}

fn normalize_rows(v: &mut DMatrix<f64>) {
    for mut row in v.row_iter_mut() {
        let norm = row.norm();
        row /= norm;
    }
}

pub fn uniform_sphere<R: Rng + ?Sized>(d: usize, rng: &mut R) -> DVector<f64> {
    loop {
        let v = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
        let norm = v.norm();
        if norm > 1e-12 {
            return v / norm;
        }
    }
}

/// One draw from vMF(μ, κ) by Wood's rejection scheme on the cosine
/// `w = μᵀv`, followed by a uniform tangent direction.
pub fn sample_vmf<R: Rng + ?Sized>(mean: &DVector<f64>, kappa: f64, rng: &mut R) -> DVector<f64> {
    let d = mean.len();
    let mu = mean / mean.norm();
    if kappa == 0.0 {
        return uniform_sphere(d, rng);
    }
    let dm1 = (d - 1) as f64;
    let b = dm1 / (2.0 * kappa + (4.0 * kappa * kappa + dm1 * dm1).sqrt());
    let x0 = (1.0 - b) / (1.0 + b);
    let c = kappa * x0 + dm1 * (1.0 - x0 * x0).ln();
    let beta = Beta::new(dm1 / 2.0, dm1 / 2.0).expect("valid beta shape");
    let w = loop {
        let z: f64 = beta.sample(rng);
        let w = (1.0 - (1.0 + b) * z) / (1.0 - (1.0 - b) * z);
        let u: f64 = rng.random();
        if kappa * w + dm1 * (1.0 - x0 * w).ln() - c >= u.ln() {
            break w;
        }
    };
    // uniform direction orthogonal to μ
    let tangent = loop {
        let g = uniform_sphere(d, rng);
        let t = &g - &mu * mu.dot(&g);
        let norm = t.norm();
        if norm > 1e-8 {
            break t / norm;
        }
    };
    mu * w + tangent * (1.0 - w * w).max(0.0).sqrt()
}

/// Mean cosine `E[μᵀv] = coth κ − 1/κ` of vMF(κ) on the 2-sphere.
pub fn vmf_mean_cosine_3d(kappa: f64) -> f64 {
    1.0 / kappa.tanh() - 1.0 / kappa
}

fn canonical_means(d: usize) -> Vec<DVector<f64>> {
    (0..d).map(|k| DVector::from_fn(d, |i, _| if i == k { 1.0 } else { 0.0 })).collect()
}

/// Cluster index of node `i` under round-robin assignment.
pub fn cluster_of(i: usize, clusters: usize) -> usize {
    i % clusters
}

pub fn gen_latent<R: Rng + ?Sized>(spec: &ScenarioSpec, rng: &mut R) -> Result<DMatrix<f64>> {
    spec.validate()?;
    let (n, d) = (spec.n, spec.d);
    match &spec.latent_law {
        LatentLaw::Uniform => {
            let mut v = DMatrix::from_fn(n, d, |_, _| rng.random::<f64>());
            // a zero row has probability zero; redraw it anyway
            for i in 0..n {
                while v.row(i).norm() < 1e-12 {
                    for k in 0..d {
                        v[(i, k)] = rng.random();
                    }
                }
            }
            normalize_rows(&mut v);
            Ok(v)
        }
        LatentLaw::Vmf { kappa, means } => {
            let means: Vec<DVector<f64>> = if means.is_empty() {
                canonical_means(3)
            } else {
                means.iter().map(|m| DVector::from_vec(m.clone())).collect()
            };
            let mut v = DMatrix::zeros(n, d);
            for i in 0..n {
                let row = sample_vmf(&means[cluster_of(i, means.len())], *kappa, rng);
                v.set_row(i, &row.transpose());
            }
            normalize_rows(&mut v);
            Ok(v)
        }
    }
}

/// `C = G − Gᵀ` with `G ~ Uniform[0,1]^{d×d}`, rescaled to unit norm.
pub fn gen_skew<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Result<SkewMatrix> {
    if d < 2 {
        return Err(Error::InvalidArgument("skew matrix needs d >= 2".into()));
    }
    loop {
        let g = DMatrix::from_fn(d, d, |_, _| rng.random::<f64>());
        let c = SkewMatrix::skew_part(&(&g - g.transpose()))?;
        let norm = c.frobenius_norm();
        if norm > 1e-12 {
            return Ok(c.scaled(1.0 / norm));
        }
    }
}

/// Popularity from its Beta draw: `15 s (0.2 η + 0.05)`.
pub fn popularity_from_eta(eta: f64, s: f64) -> f64 {
    15.0 * s * (0.2 * eta + 0.05)
}

pub fn gen_popularity<R: Rng + ?Sized>(n: usize, s: f64, rng: &mut R) -> Result<DVector<f64>> {
    if !(s > 0.0 && s.is_finite()) {
        return Err(Error::InvalidArgument(format!("scaling s = {s} must be positive")));
    }
    let eta = Beta::new(1.0, 4.0).expect("valid beta shape");
    Ok(DVector::from_fn(n, |_, _| popularity_from_eta(eta.sample(rng), s)))
}

pub fn make_scenario(spec: &ScenarioSpec) -> Result<ModelParams> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let latent = gen_latent(spec, &mut rng)?;
    let skew = gen_skew(spec.d, &mut rng)?;
    let beta = gen_popularity(spec.n, spec.s, &mut rng)?;
    if spec.gamma == 0.0 {
        ModelParams::symmetric(beta, latent)
    } else {
        ModelParams::new(beta, latent, Some(skew), spec.gamma)
    }
}

/// Random valid parameters for tests and benchmarks: `β ~ U[beta_range]`,
/// latent rows uniform on the sphere, Gaussian skew direction,
/// `γ ~ U[gamma_range]`.
pub fn random_params<R: Rng + ?Sized>(
    n: usize,
    d: usize,
    beta_range: (f64, f64),
    gamma_range: (f64, f64),
    rng: &mut R,
) -> Result<ModelParams> {
    let beta = DVector::from_fn(n, |_, _| rng.random_range(beta_range.0..=beta_range.1));
    let mut latent = DMatrix::zeros(n, d);
    for i in 0..n {
        latent.set_row(i, &uniform_sphere(d, rng).transpose());
    }
    let upper: Vec<f64> = (0..SkewMatrix::upper_len(d)).map(|_| rng.sample(StandardNormal)).collect();
    let skew = SkewMatrix::from_upper(d, upper)?;
    let skew = skew.scaled(1.0 / skew.frobenius_norm());
    let gamma = rng.random_range(gamma_range.0..=gamma_range.1);
    ModelParams::new(beta, latent, Some(skew), gamma)
}
