//! Hypergraph datasets: parsing, preprocessing and train/test splits.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hyperedge::Hyperedge;
use crate::sampler::draw_rng;

pub const DEFAULT_MIN_SIZE: usize = 2;

/// Header written by [`write_edge_list`] that fixes the node count.
pub const NODES_HEADER: &str = "# nodes:";

/// Where a dataset came from and what was done to it.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub source: Vec<String>,
    /// `original_ids[i]` is the id node `i` had in the source file.
    pub original_ids: Vec<u64>,
    pub log: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HypergraphDataset {
    pub n: usize,
    pub edges: Vec<Hyperedge>,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReadOptions {
    pub min_size: usize,
    /// Use the ids in the file as node indices instead of relabeling in
    /// first-appearance order. `n` is taken from a `# nodes: N` header, or
    /// the largest id plus one.
    pub keep_ids: bool,
}

impl Default for ReadOptions {
    fn default() -> Self {
        ReadOptions { min_size: DEFAULT_MIN_SIZE, keep_ids: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub nodes: usize,
    pub edges: usize,
    pub mean_size: f64,
    pub std_size: f64,
    pub min_size: usize,
    pub max_size: usize,
}

impl fmt::Display for DatasetSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "nodes {}  edges {}  size {:.3} ± {:.3}  range ({}, {})",
            self.nodes, self.edges, self.mean_size, self.std_size, self.min_size, self.max_size
        )
    }
}

impl HypergraphDataset {
    pub fn m(&self) -> usize {
        self.edges.len()
    }

    /// Node count, edge count, size mean ± sample std and size range.
    pub fn summary(&self) -> DatasetSummary {
        let m = self.edges.len();
        let sizes: Vec<f64> = self.edges.iter().map(|e| e.len() as f64).collect();
        let mean = if m == 0 { 0.0 } else { sizes.iter().sum::<f64>() / m as f64 };
        let var = if m > 1 {
            sizes.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (m - 1) as f64
        } else {
            0.0
        };
        DatasetSummary {
            nodes: self.n,
            edges: m,
            mean_size: mean,
            std_size: var.sqrt(),
            min_size: self.edges.iter().map(Hyperedge::len).min().unwrap_or(0),
            max_size: self.edges.iter().map(Hyperedge::len).max().unwrap_or(0),
        }
    }

    /// Builds a dataset from raw id lists, dropping edges smaller than
    /// `min_size` and collapsing repeated ids within an edge.
    pub fn from_raw(raw: Vec<(usize, Vec<u64>)>, declared_n: Option<usize>, options: &ReadOptions, source: Vec<String>) -> Result<Self> {
        let mut provenance = Provenance { source, ..Provenance::default() };
        let mut ids: HashMap<u64, usize> = HashMap::new();
        let mut edges = Vec::with_capacity(raw.len());
        for (line, nodes) in raw {
            let distinct = Hyperedge::new(nodes.iter().map(|&x| x as usize));
            if distinct.len() < nodes.len() {
                log::warn!("line {line}: repeated node id within an edge dropped");
                provenance.log.push(format!("line {line}: collapsed repeated node ids"));
            }
            if distinct.len() < options.min_size {
                provenance.log.push(format!("line {line}: dropped edge of size {}", distinct.len()));
                continue;
            }
            let mapped = if options.keep_ids {
                distinct
            } else {
                let mut seen = Vec::with_capacity(nodes.len());
                for &x in &nodes {
                    let next = ids.len();
                    let id = *ids.entry(x).or_insert_with(|| {
                        provenance.original_ids.push(x);
                        next
                    });
                    seen.push(id);
                }
                Hyperedge::new(seen)
            };
            edges.push(mapped);
        }
        let dropped = provenance.log.iter().filter(|l| l.contains("dropped edge")).count();
        if dropped > 0 {
            log::info!("dropped {dropped} edges smaller than {}", options.min_size);
        }
        if edges.is_empty() {
            return Err(Error::Data("no edges left after reading".into()));
        }
        let n = if options.keep_ids {
            let max = edges.iter().filter_map(|e| e.nodes().last()).max().copied().unwrap_or(0);
            let n = declared_n.unwrap_or(max + 1);
            if max >= n {
                return Err(Error::NodeOutOfRange { node: max, n });
            }
            provenance.original_ids = (0..n as u64).collect();
            n
        } else {
            provenance.original_ids.len()
        };
        Ok(HypergraphDataset { n, edges, provenance })
    }
}

fn parse_ids(text: &str, line: usize) -> Result<Vec<u64>> {
    text.split_whitespace()
        .map(|tok| {
            tok.parse::<u64>().map_err(|_| Error::Parse { line, message: format!("invalid node id {tok:?}") })
        })
        .collect()
}

/// Parses one edge per line (whitespace-separated non-negative ids; `#`
/// lines are comments).
pub fn parse_edge_list(text: &str, options: &ReadOptions, source: &str) -> Result<HypergraphDataset> {
    let mut raw = Vec::new();
    let mut declared_n = None;
    for (k, line) in text.lines().enumerate() {
        let line_no = k + 1;
        let trimmed = line.trim();
        if let Some(rest) = trimmed.strip_prefix(NODES_HEADER) {
            let n = rest.trim().parse::<usize>().map_err(|_| Error::Parse {
                line: line_no,
                message: format!("invalid node count {:?}", rest.trim()),
            })?;
            declared_n = Some(n);
            continue;
        }
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        raw.push((line_no, parse_ids(trimmed, line_no)?));
    }
    if raw.is_empty() {
        return Err(Error::Data(format!("{source}: no edges found")));
    }
    HypergraphDataset::from_raw(raw, declared_n, options, vec![source.to_string()])
}

pub fn read_edge_list(path: &Path, options: &ReadOptions) -> Result<HypergraphDataset> {
    let text = fs::read_to_string(path)?;
    parse_edge_list(&text, options, &path.display().to_string())
}

/// Rebuilds edges from a list of sizes and the concatenated node ids.
pub fn parse_nverts_simplices(nverts: &str, simplices: &str, options: &ReadOptions, source: Vec<String>) -> Result<HypergraphDataset> {
    let sizes: Vec<usize> = nverts
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(k, l)| {
            l.trim()
                .parse::<usize>()
                .ok()
                .filter(|&s| s > 0)
                .ok_or_else(|| Error::Parse { line: k + 1, message: format!("invalid edge size {:?}", l.trim()) })
        })
        .collect::<Result<_>>()?;
    let ids: Vec<u64> = simplices
        .lines()
        .enumerate()
        .map(|(k, l)| parse_ids(l, k + 1))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();
    let declared: usize = sizes.iter().sum();
    if declared != ids.len() {
        return Err(Error::Data(format!("sizes declare {declared} node ids but {} were found", ids.len())));
    }
    let mut raw = Vec::with_capacity(sizes.len());
    let mut offset = 0;
    for (k, &s) in sizes.iter().enumerate() {
        raw.push((k + 1, ids[offset..offset + s].to_vec()));
        offset += s;
    }
    HypergraphDataset::from_raw(raw, None, options, source)
}

pub fn read_nverts_simplices(nverts: &Path, simplices: &Path, options: &ReadOptions) -> Result<HypergraphDataset> {
    parse_nverts_simplices(
        &fs::read_to_string(nverts)?,
        &fs::read_to_string(simplices)?,
        options,
        vec![nverts.display().to_string(), simplices.display().to_string()],
    )
}

/// Text form read back by [`parse_edge_list`] with `keep_ids`.
pub fn format_edge_list(n: usize, edges: &[Hyperedge]) -> String {
    let mut out = format!("{NODES_HEADER} {n}\n");
    for e in edges {
        out.push_str(&e.to_string());
        out.push('\n');
    }
    out
}

pub fn write_edge_list(path: &Path, n: usize, edges: &[Hyperedge]) -> Result<()> {
    fs::write(path, format_edge_list(n, edges))?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreprocessOptions {
    pub min_size: usize,
    pub max_size: Option<usize>,
    /// Keep only the most frequent nodes (ties go to the smaller id).
    pub top_k_nodes: Option<usize>,
}

impl Default for PreprocessOptions {
    fn default() -> Self {
        PreprocessOptions { min_size: DEFAULT_MIN_SIZE, max_size: None, top_k_nodes: None }
    }
}

/// Node filtering, size filtering and monotone relabeling of the nodes that
/// remain in some edge. Every drop is appended to the provenance log.
pub fn preprocess(dataset: &HypergraphDataset, options: &PreprocessOptions) -> Result<HypergraphDataset> {
    let mut log = dataset.provenance.log.clone();
    let keep: Option<Vec<bool>> = options.top_k_nodes.map(|k| {
        let mut degree = vec![0usize; dataset.n];
        for e in &dataset.edges {
            for &i in e.nodes() {
                degree[i] += 1;
            }
        }
        let mut order: Vec<usize> = (0..dataset.n).collect();
        order.sort_by(|&a, &b| degree[b].cmp(&degree[a]).then(a.cmp(&b)));
        let mut keep = vec![false; dataset.n];
        for &i in order.iter().take(k) {
            keep[i] = true;
        }
        log.push(format!("preprocess: kept the {} most frequent of {} nodes", k.min(dataset.n), dataset.n));
        keep
    });
    let mut edges = Vec::with_capacity(dataset.edges.len());
    for (idx, e) in dataset.edges.iter().enumerate() {
        let e = match &keep {
            Some(keep) => Hyperedge::new(e.nodes().iter().copied().filter(|&i| keep[i])),
            None => e.clone(),
        };
        if e.len() < options.min_size {
            log.push(format!("preprocess: dropped edge {idx} (size {} < {})", e.len(), options.min_size));
            continue;
        }
        if let Some(max) = options.max_size {
            if e.len() > max {
                log.push(format!("preprocess: dropped edge {idx} (size {} > {max})", e.len()));
                continue;
            }
        }
        edges.push(e);
    }
    if edges.is_empty() {
        return Err(Error::Data("no edges left after preprocessing".into()));
    }
    let mut used = vec![false; dataset.n];
    for e in &edges {
        for &i in e.nodes() {
            used[i] = true;
        }
    }
    let mut relabel = vec![usize::MAX; dataset.n];
    let mut original_ids = Vec::new();
    for i in (0..dataset.n).filter(|&i| used[i]) {
        relabel[i] = original_ids.len();
        original_ids.push(dataset.provenance.original_ids.get(i).copied().unwrap_or(i as u64));
    }
    if original_ids.len() < dataset.n {
        log.push(format!("preprocess: relabeled {} remaining nodes", original_ids.len()));
    }
    let edges: Vec<Hyperedge> =
        edges.into_iter().map(|e| Hyperedge::new(e.nodes().iter().map(|&i| relabel[i]))).collect();
    let dropped = dataset.edges.len() - edges.len();
    if dropped > 0 {
        log::info!("preprocess dropped {dropped} of {} edges", dataset.edges.len());
    }
    Ok(HypergraphDataset {
        n: original_ids.len(),
        edges,
        provenance: Provenance { source: dataset.provenance.source.clone(), original_ids, log },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub repeats: usize,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec { train_fraction: 0.8, repeats: 5, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub repeat: usize,
    pub train: Vec<Hyperedge>,
    pub test: Vec<Hyperedge>,
}

/// Test set size `⌊m (1 − f)⌋`; the remainder goes to training.
pub fn split_sizes(m: usize, train_fraction: f64) -> Result<(usize, usize)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!("train fraction {train_fraction} not in (0, 1)")));
    }
    let test = (m as f64 * (1.0 - train_fraction) + 1e-9).floor() as usize;
    let train = m - test;
    if test == 0 || train == 0 {
        return Err(Error::InvalidArgument(format!(
            "{m} edges with train fraction {train_fraction} give a {train}/{test} split"
        )));
    }
    Ok((train, test))
}

/// `repeats` independent shuffles of the edge list, each cut into train and
/// test. Repeat `r` depends only on `(seed, r)`.
pub fn split(dataset: &HypergraphDataset, spec: &SplitSpec) -> Result<Vec<Split>> {
    if spec.repeats == 0 {
        return Err(Error::InvalidArgument("repeats must be at least 1".into()));
    }
    let m = dataset.edges.len();
    if m < 2 {
        return Err(Error::InvalidArgument("splitting needs at least 2 edges".into()));
    }
    let (train_size, _) = split_sizes(m, spec.train_fraction)?;
    Ok((0..spec.repeats)
        .map(|r| {
            let mut order: Vec<usize> = (0..m).collect();
            order.shuffle(&mut draw_rng(spec.seed, r as u64));
            let pick = |idx: &[usize]| idx.iter().map(|&i| dataset.edges[i].clone()).collect();
            Split { repeat: r, train: pick(&order[..train_size]), test: pick(&order[train_size..]) }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn edges(ds: &HypergraphDataset) -> Vec<Vec<usize>> {
        ds.edges.iter().map(|e| e.nodes().to_vec()).collect()
    }

    fn parse(text: &str) -> Result<HypergraphDataset> {
        parse_edge_list(text, &ReadOptions::default(), "test")
    }

    #[test]
    fn edge_list_examples() {
        let ds = parse("0 1\n1 2 3\n").unwrap();
        assert_eq!(ds.n, 4);
        assert_eq!(edges(&ds), vec![vec![0, 1], vec![1, 2, 3]]);

        let ds = parse("7 9\n7 9\n").unwrap();
        assert_eq!(ds.n, 2);
        assert_eq!(edges(&ds), vec![vec![0, 1], vec![0, 1]]);
        assert_eq!(ds.provenance.original_ids, vec![7, 9]);

        let ds = parse("5 5 6\n").unwrap();
        assert_eq!(edges(&ds), vec![vec![0, 1]]);
        assert!(ds.provenance.log[0].contains("repeated"));
    }

    #[test]
    fn edge_list_errors() {
        match parse("# c\n1 2\n3 x\n") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        assert!(parse("").is_err());
        assert!(parse("# only comments\n").is_err());
    }

    #[test]
    fn keep_ids_uses_header() {
        let opts = ReadOptions { keep_ids: true, ..ReadOptions::default() };
        let ds = parse_edge_list("# nodes: 10\n3 1\n", &opts, "t").unwrap();
        assert_eq!(ds.n, 10);
        assert_eq!(edges(&ds), vec![vec![1, 3]]);
        assert!(parse_edge_list("# nodes: 2\n3 1\n", &opts, "t").is_err());
    }

    #[test]
    fn write_read_round_trip() {
        let ds = parse("4 2\n2 9 1\n4 2\n").unwrap();
        let text = format_edge_list(ds.n, &ds.edges);
        let opts = ReadOptions { keep_ids: true, ..ReadOptions::default() };
        let back = parse_edge_list(&text, &opts, "t").unwrap();
        assert_eq!(back.edges, ds.edges);
        assert_eq!(back.n, ds.n);
        assert_eq!(format_edge_list(back.n, &back.edges), text);
    }

    #[test]
    fn nverts_examples() {
        let opts = ReadOptions::default();
        let ds = parse_nverts_simplices("2\n3\n", "1\n2\n1\n2\n3\n", &opts, vec![]).unwrap();
        assert_eq!(ds.provenance.original_ids, vec![1, 2, 3]);
        assert_eq!(edges(&ds), vec![vec![0, 1], vec![0, 1, 2]]);
        assert!(parse_nverts_simplices("2\n", "1\n2\n3\n", &opts, vec![]).is_err());
        let ds = parse_nverts_simplices("1\n2\n", "5\n5\n6\n", &opts, vec![]).unwrap();
        assert_eq!(ds.m(), 1);
        assert!(ds.provenance.log.iter().any(|l| l.contains("dropped edge of size 1")));
    }

    #[test]
    fn preprocess_examples() {
        let ds = parse("0 1\n1 2 3\n0 3\n").unwrap();
        assert_eq!(preprocess(&ds, &PreprocessOptions::default()).unwrap().edges, ds.edges);

        let ds = parse("0 1\n1 2 3\n0 1 2 3 4\n").unwrap();
        let out = preprocess(&ds, &PreprocessOptions { max_size: Some(4), ..Default::default() }).unwrap();
        assert_eq!(out.m(), 2);
        assert_eq!(out.n, 4);
        assert!(out.provenance.log.iter().any(|l| l.contains("size 5 > 4")));
    }

    #[test]
    fn top_k_restricts_nodes() {
        let ds = parse("0 1\n0 2\n0 1 3\n2 3\n").unwrap();
        // degrees: 0:3 1:2 2:2 3:2, so {0, 1} survive with top 2
        let out = preprocess(&ds, &PreprocessOptions { top_k_nodes: Some(2), ..Default::default() }).unwrap();
        assert_eq!(out.n, 2);
        assert_eq!(edges(&out), vec![vec![0, 1], vec![0, 1]]);
        assert!(out.n <= ds.n && out.m() <= ds.m());
    }

    #[test]
    fn summary_statistics() {
        let s = parse("0 1\n1 2 3\n").unwrap().summary();
        assert_eq!((s.nodes, s.edges, s.min_size, s.max_size), (4, 2, 2, 3));
        assert!((s.mean_size - 2.5).abs() < 1e-15);
        assert!((s.std_size - 0.5f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn split_examples() {
        let text: String = (0..10).map(|i| format!("{i} {}\n", i + 1)).collect();
        let ds = parse(&text).unwrap();
        let spec = SplitSpec::default();
        let a = split(&ds, &spec).unwrap();
        assert!(a.iter().all(|s| s.train.len() == 8 && s.test.len() == 2));
        assert_eq!(a, split(&ds, &spec).unwrap());
        let distinct: HashSet<Vec<Hyperedge>> = a.iter().map(|s| s.test.clone()).collect();
        assert_eq!(distinct.len(), 5);
        assert!(split_sizes(3, 0.8).is_err());
        assert!(split_sizes(10, 1.0).is_err());
    }
}
