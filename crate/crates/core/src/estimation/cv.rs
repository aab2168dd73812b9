//! K-fold selection of the latent dimension.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::likelihood::{log_likelihood, EdgeCounts};
use super::optimizer::{fit, FitConfig};
use crate::error::{Error, Result};
use crate::hyperedge::Hyperedge;
use crate::sampler::draw_rng;

pub const DEFAULT_FOLDS: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimensionScore {
    pub d: usize,
    /// Held-out mean log-likelihood per edge, averaged over folds.
    pub mean: f64,
    pub folds: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub chosen: usize,
    pub scores: Vec<DimensionScore>,
}

/// Edge-level folds: edges are shuffled with `seed`, and edge `k` of the
/// shuffled list goes to fold `k mod folds`.
pub fn kfold(edges: &[Hyperedge], folds: usize, seed: u64) -> Result<Vec<(Vec<Hyperedge>, Vec<Hyperedge>)>> {
    if folds < 2 {
        return Err(Error::InvalidArgument("at least 2 folds are required".into()));
    }
    if edges.len() < folds {
        return Err(Error::InvalidArgument(format!(
            "{} edges cannot fill {folds} folds",
            edges.len()
        )));
    }
    let mut order: Vec<usize> = (0..edges.len()).collect();
    order.shuffle(&mut draw_rng(seed, 0));
    Ok((0..folds)
        .map(|f| {
            let mut train = Vec::new();
            let mut test = Vec::new();
            for (pos, &i) in order.iter().enumerate() {
                if pos % folds == f {
                    test.push(edges[i].clone());
                } else {
                    train.push(edges[i].clone());
                }
            }
            (train, test)
        })
        .collect())
}

/// Fits every candidate dimension on each training fold and scores the
/// held-out fold. The dimension with the best average wins; ties go to the
/// smallest `d`.
pub fn cross_validate_dimension(
    data: &EdgeCounts,
    candidate_ds: &[usize],
    config: &FitConfig,
    folds: usize,
) -> Result<CvResult> {
    if candidate_ds.is_empty() {
        return Err(Error::InvalidArgument("no candidate dimensions".into()));
    }
    let mut ds = candidate_ds.to_vec();
    ds.sort_unstable();
    ds.dedup();
    let n = data.n();
    let splits = kfold(&data.expand(), folds, config.seed)?;
    let mut scores = Vec::with_capacity(ds.len());
    for &d in &ds {
        let cfg = FitConfig { d, ..config.clone() };
        let mut per_fold = Vec::with_capacity(folds);
        for (k, (train, test)) in splits.iter().enumerate() {
            if train.is_empty() {
                return Err(Error::InvalidArgument(format!("fold {k} has no training edges")));
            }
            let train = EdgeCounts::from_edges(n, train)?;
            let test = EdgeCounts::from_edges(n, test)?;
            let fitted = fit(&train, &cfg)?;
            let score = log_likelihood(&fitted.params, &test)?;
            log::debug!("d={d} fold={k} held-out={score}");
            per_fold.push(score);
        }
        let mean = per_fold.iter().sum::<f64>() / per_fold.len() as f64;
        log::info!("d={d} mean held-out log-likelihood {mean}");
        scores.push(DimensionScore { d, mean, folds: per_fold });
    }
    let mut chosen = &scores[0];
    for s in &scores[1..] {
        if s.mean > chosen.mean {
            chosen = s;
        }
    }
    Ok(CvResult { chosen: chosen.d, scores })
}
