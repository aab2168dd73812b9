//! JSON persistence of fitted or generating parameters.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::{FitConfig, FitResult};
use crate::params::{ModelParams, SkewMatrix};

pub const FORMAT_VERSION: u32 = 1;

/// On-disk layout. `V` is row-major; `C_upper` is the strict upper
/// triangle of `C`, row-major, or `null` for the symmetric model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    format_version: u32,
    n: usize,
    d: usize,
    gamma: f64,
    gamma_max: f64,
    beta: Vec<f64>,
    #[serde(rename = "V")]
    latent: Vec<f64>,
    #[serde(rename = "C_upper")]
    skew_upper: Option<Vec<f64>>,
    loglik: Option<f64>,
    config: Option<FitConfig>,
    seed: Option<u64>,
}

/// Parameters plus what is known about how they were produced.
#[derive(Debug, Clone, PartialEq)]
pub struct SavedModel {
    pub params: ModelParams,
    pub log_likelihood_per_edge: Option<f64>,
    pub config: Option<FitConfig>,
    pub seed: Option<u64>,
}

impl SavedModel {
    pub fn params_only(params: ModelParams, seed: Option<u64>) -> Self {
        SavedModel { params, log_likelihood_per_edge: None, config: None, seed }
    }
}

impl From<&FitResult> for SavedModel {
    fn from(fit: &FitResult) -> Self {
        SavedModel {
            params: fit.params.clone(),
            log_likelihood_per_edge: Some(fit.log_likelihood_per_edge),
            config: Some(fit.config.clone()),
            seed: Some(fit.config.seed),
        }
    }
}

pub fn model_to_json(model: &SavedModel) -> Result<String> {
    let p = &model.params;
    let file = ModelFile {
        format_version: FORMAT_VERSION,
        n: p.n(),
        d: p.d(),
        gamma: p.gamma(),
        gamma_max: p.gamma_max(),
        beta: p.beta().iter().copied().collect(),
        latent: p.latent().transpose().iter().copied().collect(),
        skew_upper: p.skew().map(|c| c.upper().to_vec()),
        loglik: model.log_likelihood_per_edge,
        config: model.config.clone(),
        seed: model.seed,
    };
    serde_json::to_string_pretty(&file).map_err(|e| Error::ModelFormat(e.to_string()))
}

/// Parses and validates; invalid parameters are rejected, never repaired.
pub fn model_from_json(text: &str) -> Result<SavedModel> {
    let file: ModelFile = serde_json::from_str(text).map_err(|e| Error::ModelFormat(e.to_string()))?;
    if file.format_version != FORMAT_VERSION {
        return Err(Error::ModelFormat(format!(
            "format_version {} is not supported (expected {FORMAT_VERSION})",
            file.format_version
        )));
    }
    let (n, d) = (file.n, file.d);
    if file.beta.len() != n {
        return Err(Error::ModelFormat(format!("beta has {} entries, n = {n}", file.beta.len())));
    }
    if file.latent.len() != n * d {
        return Err(Error::ModelFormat(format!("V has {} entries, n·d = {}", file.latent.len(), n * d)));
    }
    let skew = match file.skew_upper {
        Some(u) => {
            if u.len() != SkewMatrix::upper_len(d) {
                return Err(Error::ModelFormat(format!("C_upper has {} entries for d = {d}", u.len())));
            }
            Some(SkewMatrix::from_upper(d, u)?)
        }
        None => None,
    };
    let params = ModelParams::with_gamma_max(
        DVector::from_vec(file.beta),
        DMatrix::from_row_slice(n, d, &file.latent),
        skew,
        file.gamma,
        file.gamma_max,
    )
    .map_err(|e| Error::ModelFormat(e.to_string()))?;
    Ok(SavedModel { params, log_likelihood_per_edge: file.loglik, config: file.config, seed: file.seed })
}

pub fn save_model(model: &SavedModel, path: &Path) -> Result<()> {
    let mut text = model_to_json(model)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<SavedModel> {
    model_from_json(&fs::read_to_string(path)?)
}
