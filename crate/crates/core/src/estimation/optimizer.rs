//! Projected adaptive-moment ascent with multiple random starts.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Normal, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::likelihood::{evaluate, EdgeCounts, Gradient, ParamsCandidate, DEFAULT_DET_FLOOR};
use crate::error::{Error, Result};
use crate::params::{ModelParams, SkewMatrix, DEFAULT_GAMMA_MAX};
use crate::sampler::draw_rng;
use crate::synth::uniform_sphere;

/// Norms below this are re-randomized by the projection.
pub const DEGENERATE_NORM: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    pub d: usize,
    pub starts: usize,
    pub max_epochs: usize,
    pub step_size: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Step-size multiplier applied after `patience` epochs without improvement.
    pub decay_factor: f64,
    pub patience: usize,
    /// A start stops once its step size falls below this.
    pub min_step_size: f64,
    /// Minimum relative objective gain that counts as an improvement.
    pub tolerance: f64,
    pub beta_floor: f64,
    pub gamma_max: f64,
    /// Fix `γ = 0` and drop `C` (the symmetric DPP model).
    pub symmetric: bool,
    pub det_floor: f64,
    pub seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            d: 3,
            starts: 5,
            max_epochs: 2000,
            step_size: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            decay_factor: 0.5,
            patience: 20,
            min_step_size: 1e-5,
            tolerance: 1e-9,
            beta_floor: 1e-6,
            gamma_max: DEFAULT_GAMMA_MAX,
            symmetric: false,
            det_floor: DEFAULT_DET_FLOOR,
            seed: 0,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.to_string()));
        if self.d < 2 {
            return bad("latent dimension must be at least 2");
        }
        if self.starts == 0 {
            return bad("at least one start is required");
        }
        if !(self.beta1 > 0.0 && self.beta1 < 1.0 && self.beta2 > 0.0 && self.beta2 < 1.0) {
            return bad("moment decay rates must lie in (0, 1)");
        }
        if !(self.beta_floor > 0.0) {
            return bad("beta floor must be positive");
        }
        if !(self.step_size > 0.0 && self.epsilon > 0.0) {
            return bad("step size and epsilon must be positive");
        }
        if !(self.decay_factor > 0.0 && self.decay_factor < 1.0) {
            return bad("decay factor must lie in (0, 1)");
        }
        if !(self.gamma_max >= 0.0 && self.gamma_max.is_finite()) {
            return bad("gamma bound must be finite and non-negative");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProjectionStats {
    pub beta_floored: usize,
    pub latent_rerandomized: usize,
    pub skew_rerandomized: usize,
    pub gamma_clamped: usize,
}

impl ProjectionStats {
    pub fn total(&self) -> usize {
        self.beta_floored + self.latent_rerandomized + self.skew_rerandomized + self.gamma_clamped
    }

    fn add(&mut self, o: &ProjectionStats) {
        self.beta_floored += o.beta_floored;
        self.latent_rerandomized += o.latent_rerandomized;
        self.skew_rerandomized += o.skew_rerandomized;
        self.gamma_clamped += o.gamma_clamped;
    }
}

/// Maps a candidate onto the feasible set: `βᵢ ← max(βᵢ, floor)`, unit
/// rows of `V`, `C ← (C − Cᵀ)/2` then unit Frobenius norm, and `γ` clamped
/// to `[0, T]`. Degenerate rows or skew directions are redrawn at random.
pub fn project<R: Rng + ?Sized>(
    cand: &ParamsCandidate,
    beta_floor: f64,
    gamma_max: f64,
    rng: &mut R,
) -> Result<(ModelParams, ProjectionStats)> {
    let mut stats = ProjectionStats::default();
    if cand.beta.iter().chain(cand.latent.iter()).any(|v| !v.is_finite()) || !cand.gamma.is_finite() {
        return Err(Error::InvalidArgument("projection needs finite entries".into()));
    }
    let beta = cand.beta.map(|b| {
        if b < beta_floor {
            stats.beta_floored += 1;
            beta_floor
        } else {
            b
        }
    });
    let d = cand.d();
    let mut latent = cand.latent.clone();
    for mut row in latent.row_iter_mut() {
        let norm = row.norm();
        if norm < DEGENERATE_NORM {
            row.copy_from(&uniform_sphere(d, rng).transpose());
            stats.latent_rerandomized += 1;
        } else if (norm - 1.0).abs() > f64::EPSILON {
            row /= norm;
        }
    }
    let (skew, gamma) = match &cand.skew {
        None => (None, 0.0),
        Some(c) => {
            let mut skew = SkewMatrix::skew_part(c)?;
            let norm = skew.frobenius_norm();
            if norm < DEGENERATE_NORM {
                skew = random_skew(d, rng)?;
                stats.skew_rerandomized += 1;
            } else if (norm - 1.0).abs() > f64::EPSILON {
                skew = skew.scaled(1.0 / norm);
            }
            let gamma = cand.gamma.clamp(0.0, gamma_max);
            if gamma != cand.gamma {
                stats.gamma_clamped += 1;
            }
            (Some(skew), gamma)
        }
    };
    let params = ModelParams::with_gamma_max(beta, latent, skew, gamma, gamma_max)?;
    Ok((params, stats))
}

fn random_skew<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Result<SkewMatrix> {
    let upper: Vec<f64> = (0..SkewMatrix::upper_len(d)).map(|_| rng.sample(StandardNormal)).collect();
    let c = SkewMatrix::from_upper(d, upper)?;
    let norm = c.frobenius_norm();
    Ok(c.scaled(1.0 / norm))
}

/// Random feasible starting point: unit-sphere rows, `βᵢ = m̄/n + |N(0, 0.1)|`
/// with `m̄` the mean edge size, a random unit skew direction and
/// `γ ~ U[0, min(1, T)]`.
pub fn initial_params<R: Rng + ?Sized>(
    n: usize,
    config: &FitConfig,
    mean_size: f64,
    rng: &mut R,
) -> Result<ModelParams> {
    let d = config.d;
    let noise = Normal::new(0.0, 0.1).expect("valid normal");
    let base = mean_size / n as f64;
    let beta = DVector::from_fn(n, |_, _| (base + rng.sample::<f64, _>(noise).abs()).max(config.beta_floor));
    let mut latent = DMatrix::zeros(n, d);
    for i in 0..n {
        latent.set_row(i, &uniform_sphere(d, rng).transpose());
    }
    if config.symmetric {
        return ModelParams::with_gamma_max(beta, latent, None, 0.0, config.gamma_max);
    }
    let skew = random_skew(d, rng)?;
    let gamma = rng.random_range(0.0..=config.gamma_max.min(1.0));
    ModelParams::with_gamma_max(beta, latent, Some(skew), gamma, config.gamma_max)
}

/// Flat parameter vector `[β, V (row-major), c_upper, γ]`.
fn pack(p: &ModelParams) -> Vec<f64> {
    let mut out = Vec::with_capacity(p.n() * (p.d() + 1) + SkewMatrix::upper_len(p.d()) + 1);
    out.extend(p.beta().iter());
    for row in p.latent().row_iter() {
        out.extend(row.iter());
    }
    if let Some(c) = p.skew() {
        out.extend_from_slice(c.upper());
        out.push(p.gamma());
    }
    out
}

fn pack_gradient(g: &Gradient, symmetric: bool) -> Vec<f64> {
    let mut out: Vec<f64> = g.beta.iter().copied().collect();
    for row in g.latent.row_iter() {
        out.extend(row.iter());
    }
    if !symmetric {
        out.extend_from_slice(&g.skew_upper);
        out.push(g.gamma);
    }
    out
}

fn unpack(flat: &[f64], n: usize, d: usize, symmetric: bool) -> Result<ParamsCandidate> {
    let beta = DVector::from_column_slice(&flat[..n]);
    let latent = DMatrix::from_row_slice(n, d, &flat[n..n + n * d]);
    let (skew, gamma) = if symmetric {
        (None, 0.0)
    } else {
        let u = SkewMatrix::upper_len(d);
        let start = n + n * d;
        let c = SkewMatrix::from_upper(d, flat[start..start + u].to_vec())?;
        (Some(c.to_dense()), flat[start + u])
    };
    Ok(ParamsCandidate { beta, latent, skew, gamma })
}

/// Bias-corrected adaptive-moment state for ascent.
#[derive(Debug, Clone)]
struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    fn new(len: usize) -> Self {
        Adam { m: vec![0.0; len], v: vec![0.0; len], t: 0 }
    }

    fn ascend(&mut self, theta: &mut [f64], grad: &[f64], lr: f64, cfg: &FitConfig) {
        self.t += 1;
        let c1 = 1.0 - cfg.beta1.powi(self.t);
        let c2 = 1.0 - cfg.beta2.powi(self.t);
        for k in 0..theta.len() {
            let g = grad[k];
            self.m[k] = cfg.beta1 * self.m[k] + (1.0 - cfg.beta1) * g;
            self.v[k] = cfg.beta2 * self.v[k] + (1.0 - cfg.beta2) * g * g;
            let m_hat = self.m[k] / c1;
            let v_hat = self.v[k] / c2;
            theta[k] += lr * m_hat / (v_hat.sqrt() + cfg.epsilon);
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub projections: ProjectionStats,
    pub clamped_determinants: usize,
    pub epochs: Vec<usize>,
    pub diverged_starts: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub params: ModelParams,
    pub log_likelihood_per_edge: f64,
    /// Objective after each epoch, per start (index 0 is the initial value).
    pub trajectories: Vec<Vec<f64>>,
    pub selected_start: usize,
    pub diagnostics: FitDiagnostics,
    pub config: FitConfig,
}

struct StartOutcome {
    best: Option<(f64, ModelParams)>,
    trajectory: Vec<f64>,
    projections: ProjectionStats,
    clamped: usize,
    epochs: usize,
}

fn run_start(data: &EdgeCounts, config: &FitConfig, start: usize, init: Option<&ModelParams>) -> StartOutcome {
    let n = data.n();
    let d = config.d;
    let mut rng = draw_rng(config.seed ^ 0x6e64_7070_6669_7400, start as u64);
    let mut outcome = StartOutcome {
        best: None,
        trajectory: Vec::new(),
        projections: ProjectionStats::default(),
        clamped: 0,
        epochs: 0,
    };
    let mut params = match init {
        Some(p) => p.clone(),
        None => match initial_params(n, config, data.mean_size(), &mut rng) {
            Ok(p) => p,
            Err(_) => return outcome,
        },
    };
    let Ok(mut eval) = evaluate(&(&params).into(), data, config.det_floor, true) else {
        return outcome;
    };
    outcome.trajectory.push(eval.value);
    outcome.clamped += eval.clamped;
    outcome.best = Some((eval.value, params.clone()));
    let mut best_value = eval.value;
    let mut theta = pack(&params);
    let mut adam = Adam::new(theta.len());
    let mut lr = config.step_size;
    let mut stale = 0;
    for _ in 0..config.max_epochs {
        let grad = pack_gradient(eval.gradient.as_ref().expect("gradient requested"), config.symmetric);
        adam.ascend(&mut theta, &grad, lr, config);
        let next = unpack(&theta, n, d, config.symmetric)
            .and_then(|cand| project(&cand, config.beta_floor, config.gamma_max, &mut rng));
        let Ok((projected, stats)) = next else { break };
        outcome.projections.add(&stats);
        params = projected;
        theta = pack(&params);
        match evaluate(&(&params).into(), data, config.det_floor, true) {
            Ok(e) if e.value.is_finite() => eval = e,
            _ => break,
        }
        outcome.epochs += 1;
        outcome.clamped += eval.clamped;
        outcome.trajectory.push(eval.value);
        if eval.value > best_value + config.tolerance * best_value.abs().max(1.0) {
            stale = 0;
        } else {
            stale += 1;
        }
        if eval.value > best_value {
            best_value = eval.value;
            outcome.best = Some((eval.value, params.clone()));
        }
        if stale >= config.patience {
            lr *= config.decay_factor;
            stale = 0;
            if lr < config.min_step_size {
                break;
            }
        }
    }
    outcome
}

/// Maximum-likelihood fit: `starts` independent runs (in parallel), each a
/// projected adaptive-moment ascent with plateau-triggered step decay; the
/// run with the highest objective is returned. Deterministic given the seed.
pub fn fit(data: &EdgeCounts, config: &FitConfig) -> Result<FitResult> {
    config.validate()?;
    let outcomes: Vec<StartOutcome> =
        (0..config.starts).into_par_iter().map(|s| run_start(data, config, s, None)).collect();
    collect_starts(outcomes, config)
}

/// Single ascent from the given parameters instead of random starts.
pub fn fit_from(data: &EdgeCounts, config: &FitConfig, init: &ModelParams) -> Result<FitResult> {
    config.validate()?;
    if init.n() != data.n() || init.d() != config.d || init.is_symmetric() != config.symmetric {
        return Err(Error::InvalidArgument("starting parameters do not match the data and config".into()));
    }
    let config = FitConfig { starts: 1, ..config.clone() };
    let outcome = run_start(data, &config, 0, Some(init));
    collect_starts(vec![outcome], &config)
}

fn collect_starts(outcomes: Vec<StartOutcome>, config: &FitConfig) -> Result<FitResult> {
    let mut diagnostics = FitDiagnostics::default();
    let mut selected: Option<(usize, f64)> = None;
    for (s, o) in outcomes.iter().enumerate() {
        diagnostics.projections.add(&o.projections);
        diagnostics.clamped_determinants += o.clamped;
        diagnostics.epochs.push(o.epochs);
        match &o.best {
            Some((v, _)) if v.is_finite() => {
                if selected.is_none_or(|(_, b)| *v > b) {
                    selected = Some((s, *v));
                }
            }
            _ => diagnostics.diverged_starts += 1,
        }
    }
    let Some((selected_start, value)) = selected else {
        return Err(Error::FitFailed { starts: config.starts });
    };
    let trajectories = outcomes.iter().map(|o| o.trajectory.clone()).collect();
    let params = outcomes.into_iter().nth(selected_start).and_then(|o| o.best).map(|(_, p)| p).unwrap();
    Ok(FitResult {
        params,
        log_likelihood_per_edge: value,
        trajectories,
        selected_start,
        diagnostics,
        config: config.clone(),
    })
}
