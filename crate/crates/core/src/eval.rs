//! Hyperedge prediction metrics: AUC against size-matched random edges,
//! mean percentile rank of a masked node, and percentile-rank curves.

use std::cmp::Ordering;

use rand::seq::index;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hyperedge::Hyperedge;
use crate::kernel::{build_kernel, KernelMatrix};
use crate::linalg::{principal_submatrix, Lu};
use crate::params::ModelParams;
use crate::sampler::draw_rng;

/// Stream offsets keeping the negative draws and the masking draws apart.
const AUC_STREAM: u64 = 1 << 40;
const MPR_STREAM: u64 = 2 << 40;

pub const CURVE_POINTS: usize = 101;

/// Anything that ranks candidate edges; higher is more likely.
pub trait EdgeScorer: Sync {
    fn n(&self) -> usize;

    fn score(&self, e: &Hyperedge) -> f64;

    /// Scores of `base ∪ {j}` for each candidate `j`, up to a factor that is
    /// the same for every candidate.
    fn completion_scores(&self, base: &Hyperedge, candidates: &[usize]) -> Vec<f64> {
        candidates.iter().map(|&j| self.score(&base.with(j))).collect()
    }
}

/// Scores by `log det L_e`; completions use the Schur complement
/// `L_jj − L_{j,r} L_r⁻¹ L_{r,j}`, which is `det L_{r∪{j}} / det L_r`.
#[derive(Debug, Clone)]
pub struct KernelScorer {
    kernel: KernelMatrix,
}

impl KernelScorer {
    pub fn new(params: &ModelParams) -> Self {
        KernelScorer { kernel: build_kernel(params) }
    }

    pub fn from_kernel(kernel: KernelMatrix) -> Self {
        KernelScorer { kernel }
    }
}

impl EdgeScorer for KernelScorer {
    fn n(&self) -> usize {
        self.kernel.n()
    }

    fn score(&self, e: &Hyperedge) -> f64 {
        let ld = self.kernel.principal_log_det(e);
        if ld.sign > 0.0 {
            ld.log_abs
        } else {
            f64::NEG_INFINITY
        }
    }

    fn completion_scores(&self, base: &Hyperedge, candidates: &[usize]) -> Vec<f64> {
        let l = self.kernel.matrix();
        let r = base.nodes();
        if r.is_empty() {
            return candidates.iter().map(|&j| l[(j, j)]).collect();
        }
        let lu = Lu::new(principal_submatrix(l, r));
        if lu.is_singular() || lu.det() <= 0.0 {
            return candidates.iter().map(|&j| self.score(&base.with(j))).collect();
        }
        candidates
            .iter()
            .map(|&j| {
                let col = nalgebra::DVector::from_iterator(r.len(), r.iter().map(|&i| l[(i, j)]));
                let row = nalgebra::DVector::from_iterator(r.len(), r.iter().map(|&i| l[(j, i)]));
                l[(j, j)] - row.dot(&lu.solve_vec(&col))
            })
            .collect()
    }
}

/// Area under the ROC curve as the probability a positive outscores a
/// negative, ties counted as half.
pub fn auc_from_scores(positives: &[f64], negatives: &[f64]) -> Result<f64> {
    if positives.is_empty() || negatives.is_empty() {
        return Err(Error::InvalidArgument("AUC needs positive and negative scores".into()));
    }
    if positives.iter().chain(negatives).any(|s| s.is_nan()) {
        return Err(Error::InvalidArgument("NaN score".into()));
    }
    let mut neg = negatives.to_vec();
    neg.sort_by(f64::total_cmp);
    let mut wins = 0.0;
    for &p in positives {
        let below = neg.partition_point(|&x| x < p);
        let not_above = neg.partition_point(|&x| x <= p);
        wins += below as f64 + 0.5 * (not_above - below) as f64;
    }
    Ok(wins / (positives.len() as f64 * neg.len() as f64))
}

/// `k` distinct nodes drawn uniformly from `[0, n)`.
pub fn random_edge<R: Rng + ?Sized>(n: usize, k: usize, rng: &mut R) -> Hyperedge {
    Hyperedge::new(index::sample(rng, n, k).into_iter())
}

/// AUC with `negatives_per_edge` size-matched random edges per test edge.
/// Negatives are not filtered against the true edges.
pub fn auc_with<S: EdgeScorer>(scorer: &S, test: &[Hyperedge], seed: u64, negatives_per_edge: usize) -> Result<f64> {
    let n = scorer.n();
    if test.is_empty() {
        return Err(Error::InvalidArgument("empty test set".into()));
    }
    if negatives_per_edge == 0 {
        return Err(Error::InvalidArgument("at least one negative per edge is required".into()));
    }
    for e in test {
        e.check_range(n)?;
    }
    let positives: Vec<f64> = test.par_iter().map(|e| scorer.score(e)).collect();
    let negatives: Vec<f64> = test
        .par_iter()
        .enumerate()
        .flat_map_iter(|(t, e)| {
            let mut rng = draw_rng(seed, AUC_STREAM + t as u64);
            (0..negatives_per_edge).map(move |_| scorer.score(&random_edge(n, e.len(), &mut rng))).collect::<Vec<_>>()
        })
        .collect();
    auc_from_scores(&positives, &negatives)
}

pub fn auc(model: &ModelParams, test: &[Hyperedge], seed: u64) -> Result<f64> {
    auc_with(&KernelScorer::new(model), test, seed, 1)
}

/// Percentile of `target` among `others`: the fraction scored strictly
/// below it, ties counted as half.
pub fn percentile_rank(target: f64, others: &[f64]) -> f64 {
    let mut below = 0.0;
    for &s in others {
        match s.total_cmp(&target) {
            Ordering::Less => below += 1.0,
            Ordering::Equal => below += 0.5,
            Ordering::Greater => {}
        }
    }
    below / others.len() as f64
}

/// For each test edge one node is masked at random and ranked among every
/// node outside the rest of the edge. Returns the mean rank and the ranks.
pub fn mpr_with<S: EdgeScorer>(scorer: &S, test: &[Hyperedge], seed: u64) -> Result<(f64, Vec<f64>)> {
    let n = scorer.n();
    if test.is_empty() {
        return Err(Error::InvalidArgument("empty test set".into()));
    }
    for e in test {
        e.check_range(n)?;
        if e.len() < 2 {
            return Err(Error::InvalidArgument(format!("edge [{e}] is too small to mask a node")));
        }
        if e.len() >= n {
            return Err(Error::InvalidArgument(format!("edge [{e}] leaves no competing candidates")));
        }
    }
    let ranks: Vec<f64> = test
        .par_iter()
        .enumerate()
        .map(|(t, e)| {
            let mut rng = draw_rng(seed, MPR_STREAM + t as u64);
            let masked = e.nodes()[rng.random_range(0..e.len())];
            let base = e.without(masked);
            let candidates = base.complement(n);
            let scores = scorer.completion_scores(&base, &candidates);
            let pos = candidates.binary_search(&masked).expect("masked node is a candidate");
            let others: Vec<f64> =
                scores.iter().enumerate().filter(|&(k, _)| k != pos).map(|(_, &s)| s).collect();
            percentile_rank(scores[pos], &others)
        })
        .collect();
    let mean = ranks.iter().sum::<f64>() / ranks.len() as f64;
    Ok((mean, ranks))
}

pub fn mpr(model: &ModelParams, test: &[Hyperedge], seed: u64) -> Result<(f64, Vec<f64>)> {
    mpr_with(&KernelScorer::new(model), test, seed)
}

/// Proportion of ranks at or above `t` for `t = 0, 0.01, …, 1`.
pub fn rank_curve(ranks: &[f64]) -> Result<Vec<(f64, f64)>> {
    if ranks.is_empty() {
        return Err(Error::InvalidArgument("no ranks".into()));
    }
    let mut sorted = ranks.to_vec();
    sorted.sort_by(f64::total_cmp);
    let m = sorted.len() as f64;
    Ok((0..CURVE_POINTS)
        .map(|k| {
            let t = k as f64 / (CURVE_POINTS - 1) as f64;
            let below = sorted.partition_point(|&r| r < t);
            (t, (sorted.len() - below) as f64 / m)
        })
        .collect())
}

pub const CURVE_CSV_HEADER: &str = "t,proportion";

pub fn curve_csv(curve: &[(f64, f64)]) -> String {
    let mut out = format!("{CURVE_CSV_HEADER}\n");
    for (t, p) in curve {
        out.push_str(&format!("{t:.2},{p}\n"));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Auc,
    Mpr,
}

/// Metrics for one test set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub auc: Option<f64>,
    pub mpr: Option<f64>,
    pub ranks: Vec<f64>,
    pub rank_curve: Vec<(f64, f64)>,
}

pub fn evaluate_with<S: EdgeScorer>(scorer: &S, test: &[Hyperedge], metrics: &[Metric], seed: u64) -> Result<EvalReport> {
    let mut report = EvalReport { auc: None, mpr: None, ranks: Vec::new(), rank_curve: Vec::new() };
    if metrics.contains(&Metric::Auc) {
        report.auc = Some(auc_with(scorer, test, seed, 1)?);
    }
    if metrics.contains(&Metric::Mpr) {
        let (mean, ranks) = mpr_with(scorer, test, seed)?;
        report.rank_curve = rank_curve(&ranks)?;
        report.mpr = Some(mean);
        report.ranks = ranks;
    }
    Ok(report)
}

pub fn evaluate(model: &ModelParams, test: &[Hyperedge], metrics: &[Metric], seed: u64) -> Result<EvalReport> {
    evaluate_with(&KernelScorer::new(model), test, metrics, seed)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub dataset: String,
    pub repeat: usize,
    pub metric: String,
    pub value: f64,
}

pub const REPORT_CSV_HEADER: &str = "dataset,repeat,metric,value";

impl ReportRow {
    pub fn to_csv(&self) -> String {
        format!("{},{},{},{}", self.dataset, self.repeat, self.metric, self.value)
    }
}

impl EvalReport {
    pub fn rows(&self, dataset: &str, repeat: usize) -> Vec<ReportRow> {
        [("auc", self.auc), ("mpr", self.mpr)]
            .into_iter()
            .filter_map(|(metric, v)| {
                v.map(|value| ReportRow { dataset: dataset.to_string(), repeat, metric: metric.to_string(), value })
            })
            .collect()
    }
}

pub fn report_csv(rows: &[ReportRow]) -> String {
    let mut out = format!("{REPORT_CSV_HEADER}\n");
    for r in rows {
        out.push_str(&r.to_csv());
        out.push('\n');
    }
    out
}

/// Mean and sample standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let k = values.len();
    if k == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / k as f64;
    let var = if k > 1 { values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1) as f64 } else { 0.0 };
    (mean, var.sqrt())
}

/// Uniform pseudo-random score derived from the edge and a salt, for
/// checking the metrics' null behavior.
#[derive(Debug, Clone, Copy)]
pub struct RandomScorer {
    pub n: usize,
    pub salt: u64,
}

impl EdgeScorer for RandomScorer {
    fn n(&self) -> usize {
        self.n
    }

    fn score(&self, e: &Hyperedge) -> f64 {
        use std::hash::{DefaultHasher, Hash, Hasher};
        let mut h = DefaultHasher::new();
        self.salt.hash(&mut h);
        e.hash(&mut h);
        (h.finish() >> 11) as f64 / (1u64 << 53) as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::conditional_exact;
    use crate::synth::random_params;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::collections::HashSet;

    struct Oracle {
        n: usize,
        truth: HashSet<Hyperedge>,
    }

    impl EdgeScorer for Oracle {
        fn n(&self) -> usize {
            self.n
        }

        fn score(&self, e: &Hyperedge) -> f64 {
            if self.truth.contains(e) {
                1.0
            } else {
                0.0
            }
        }
    }

    #[test]
    fn auc_rank_statistic() {
        assert_eq!(auc_from_scores(&[3.0, 4.0], &[1.0, 2.0]).unwrap(), 1.0);
        assert_eq!(auc_from_scores(&[1.0], &[1.0]).unwrap(), 0.5);
        assert_eq!(auc_from_scores(&[1.0, 3.0], &[2.0]).unwrap(), 0.5);
        assert_eq!(auc_from_scores(&[f64::NEG_INFINITY], &[0.0]).unwrap(), 0.0);
        assert!(auc_from_scores(&[], &[1.0]).is_err());
    }

    #[test]
    fn random_scorer_is_null() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let test: Vec<Hyperedge> = (0..10_000).map(|_| random_edge(200, rng.random_range(2..6), &mut rng)).collect();
        let scorer = RandomScorer { n: 200, salt: 3 };
        let a = auc_with(&scorer, &test, 5, 1).unwrap();
        assert!((a - 0.5).abs() < 0.02, "auc {a}");
        let (m, _) = mpr_with(&scorer, &test[..2000], 5).unwrap();
        assert!((m - 0.5).abs() < 0.02, "mpr {m}");
    }

    #[test]
    fn perfect_scorer_gives_one() {
        let test: Vec<Hyperedge> = (0..20).map(|k| Hyperedge::from([3 * k, 3 * k + 1, 3 * k + 2])).collect();
        let oracle = Oracle { n: 60, truth: test.iter().cloned().collect() };
        let (m, ranks) = mpr_with(&oracle, &test, 0).unwrap();
        assert_eq!(m, 1.0);
        assert!(ranks.iter().all(|&r| r == 1.0));
    }

    #[test]
    fn mpr_errors() {
        let oracle = Oracle { n: 3, truth: HashSet::new() };
        assert!(mpr_with(&oracle, &[Hyperedge::from([0])], 0).is_err());
        assert!(mpr_with(&oracle, &[Hyperedge::from([0, 1, 2])], 0).is_err());
        assert!(auc_with(&oracle, &[Hyperedge::from([0, 7])], 0, 1).is_err());
    }

    #[test]
    fn completion_ranking_matches_conditional() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let p = random_params(8, 3, (0.3, 2.0), (0.0, 1.0), &mut rng).unwrap();
            let scorer = KernelScorer::new(&p);
            let base = random_edge(8, 3, &mut rng);
            let cands = base.complement(8);
            let fast = scorer.completion_scores(&base, &cands);
            let exact: Vec<f64> = cands
                .iter()
                .map(|&j| conditional_exact(&scorer.kernel, &base, &base.with(j)).unwrap())
                .collect();
            let order = |v: &[f64]| {
                let mut idx: Vec<usize> = (0..v.len()).collect();
                idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
                idx
            };
            assert_eq!(order(&fast), order(&exact));
        }
    }

    #[test]
    fn rank_curve_properties() {
        let c = rank_curve(&[1.0; 10]).unwrap();
        assert_eq!(c.len(), 101);
        assert!(c.iter().all(|&(_, p)| p == 1.0));
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let u: Vec<f64> = (0..5000).map(|_| rng.random::<f64>()).collect();
        let c = rank_curve(&u).unwrap();
        assert_eq!(c[0], (0.0, 1.0));
        for w in c.windows(2) {
            assert!(w[1].1 <= w[0].1);
        }
        for &(t, p) in &c {
            assert!((p - (1.0 - t)).abs() < 0.03);
        }
        assert!(rank_curve(&[]).is_err());
    }

    #[test]
    fn evaluation_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = random_params(15, 3, (0.3, 2.0), (0.0, 1.0), &mut rng).unwrap();
        let test: Vec<Hyperedge> = (0..50).map(|_| random_edge(15, 3, &mut rng)).collect();
        let a = evaluate(&p, &test, &[Metric::Auc, Metric::Mpr], 4).unwrap();
        assert_eq!(a, evaluate(&p, &test, &[Metric::Auc, Metric::Mpr], 4).unwrap());
        assert!(a.auc.unwrap() >= 0.0 && a.auc.unwrap() <= 1.0);
        assert_eq!(a.rows("toy", 0).len(), 2);
    }
}
