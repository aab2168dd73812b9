use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use ndpp::alignment::{report_rows, METRIC_CSV_HEADER};
use ndpp::data::dataset::NODES_HEADER;
use ndpp::data::{
    parse_edge_list, preprocess, read_nverts_simplices, save_model, load_model, write_edge_list, HypergraphDataset,
    PreprocessOptions, ReadOptions, SavedModel, SplitSpec,
};
use ndpp::estimation::cv::cross_validate_dimension;
use ndpp::eval::{curve_csv, evaluate, report_csv, Metric};
use ndpp::experiment::{self, fit_replicate, replicate_seed, size_histogram};
use ndpp::sampler::draw_rng;
use ndpp::sampler::experimental::sample_hyperedge_printed;
use ndpp::synth::LatentLaw;
use ndpp::{aligned_errors, build_kernel, make_scenario, EdgeCounts, ErrorKind, FitConfig, ScenarioSpec, Sampler};

use crate::manifest::RunManifest;
use crate::{
    AlignArgs, CvArgs, DatasetInput, EdgeInput, EvalArgs, FitArgs, Latent, MetricChoice, OptimizerArgs, RecoveryArgs,
    SampleArgs, ScenarioArgs, SimulateArgs, SizesArgs, SplitArgs, SummarizeArgs, EXIT_DATA, EXIT_NUMERICAL, EXIT_USAGE,
};

/// A bad flag combination caught by the front end.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<UsageError>() {
            return EXIT_USAGE;
        }
        if let Some(e) = cause.downcast_ref::<ndpp::Error>() {
            return match e.kind() {
                ErrorKind::Usage => EXIT_USAGE,
                ErrorKind::Data => EXIT_DATA,
                ErrorKind::Numerical => EXIT_NUMERICAL,
            };
        }
    }
    EXIT_DATA
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn write_edges(path: &Path, n: usize, edges: &[ndpp::Hyperedge]) -> Result<()> {
    write_text(path, "")?;
    write_edge_list(path, n, edges).with_context(|| format!("writing {}", path.display()))
}

fn write_model(path: &Path, model: &SavedModel) -> Result<()> {
    write_text(path, "")?;
    save_model(model, path).with_context(|| format!("writing {}", path.display()))
}

fn read_model(path: &Path) -> Result<SavedModel> {
    load_model(path).with_context(|| format!("loading model {}", path.display()))
}

fn has_nodes_header(text: &str) -> bool {
    text.lines().any(|l| l.trim_start().starts_with(NODES_HEADER))
}

fn read_edges(path: &Path, min_size: usize, keep_ids: bool) -> Result<(HypergraphDataset, bool)> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let header = has_nodes_header(&text);
    let options = ReadOptions { min_size, keep_ids: keep_ids || header };
    let data = parse_edge_list(&text, &options, &path.display().to_string())
        .with_context(|| format!("parsing {}", path.display()))?;
    Ok((data, header))
}

fn read_input(input: &EdgeInput) -> Result<HypergraphDataset> {
    let (data, _) = read_edges(&input.edges, input.min_size, input.keep_ids)?;
    log::info!("{}: {}", input.edges.display(), data.summary());
    Ok(data)
}

fn scenario_spec(args: &ScenarioArgs, s: f64) -> ScenarioSpec {
    let latent_law = match args.latent {
        Latent::Uniform => LatentLaw::Uniform,
        Latent::Vmf => LatentLaw::Vmf { kappa: args.kappa, means: Vec::new() },
    };
    ScenarioSpec { n: args.n, d: args.d, latent_law, s, gamma: args.gamma, seed: args.seed }
}

fn fit_config(opt: &OptimizerArgs) -> FitConfig {
    FitConfig {
        d: opt.d,
        starts: opt.starts,
        max_epochs: opt.epochs,
        step_size: opt.lr,
        gamma_max: opt.gamma_max,
        symmetric: opt.symmetric,
        seed: opt.seed,
        ..FitConfig::default()
    }
}

fn histogram_csv(header: &str, prefix: Option<f64>, counts: &[usize]) -> String {
    let mut out = format!("{header}\n");
    for (size, count) in counts.iter().enumerate() {
        match prefix {
            Some(s) => out.push_str(&format!("{s},{size},{count}\n")),
            None => out.push_str(&format!("{size},{count}\n")),
        }
    }
    out
}

pub fn simulate(args: &SimulateArgs) -> Result<()> {
    let spec = scenario_spec(&args.scenario, args.scenario.s);
    let truth = make_scenario(&spec)?;
    let sampler = Sampler::new(&build_kernel(&truth))?;
    let (edges, redraws) = sampler.sample_batch_min_size(args.m as usize, args.min_size, spec.seed)?;
    if redraws > 0 {
        log::info!("redrew {redraws} edges smaller than {}", args.min_size);
    }
    let mut manifest = RunManifest::new("simulate", args, Some(spec.seed))?;
    write_edges(&args.out_edges, truth.n(), &edges)?;
    manifest.output(&args.out_edges);
    write_model(&args.out_params, &SavedModel::params_only(truth.clone(), Some(spec.seed)))?;
    manifest.output(&args.out_params);
    if let Some(path) = &args.out_hist {
        write_text(path, &histogram_csv("size,count", None, &size_histogram(&edges, truth.n())))?;
        manifest.output(path);
    }
    manifest.write()?;
    let mean = edges.iter().map(|e| e.len()).sum::<usize>() as f64 / edges.len() as f64;
    println!("simulated {} edges over {} nodes, mean size {mean:.3}", edges.len(), truth.n());
    Ok(())
}

pub fn fit(args: &FitArgs) -> Result<()> {
    let data = read_input(&args.input)?;
    let counts = EdgeCounts::from_edges(data.n, &data.edges)?;
    let config = fit_config(&args.optimizer);
    let result = ndpp::fit(&counts, &config)?;
    let diag = &result.diagnostics;
    if diag.diverged_starts > 0 {
        log::warn!("{} of {} starts diverged", diag.diverged_starts, config.starts);
    }
    let mut manifest = RunManifest::new("fit", args, Some(config.seed))?;
    manifest.input(&args.input.edges)?;
    write_model(&args.out_model, &SavedModel::from(&result))?;
    manifest.output(&args.out_model);
    manifest.write()?;
    println!("log-likelihood per edge: {}", result.log_likelihood_per_edge);
    Ok(())
}

pub fn sample(args: &SampleArgs) -> Result<()> {
    let model = read_model(&args.model)?;
    let edges = if args.experimental_printed_sampler {
        log::warn!("the printed recursion does not follow the model distribution when beta > 0");
        printed_batch(&model.params, args.m as usize, args.min_size, args.seed)?
    } else {
        let sampler = Sampler::new(&build_kernel(&model.params))?;
        sampler.sample_batch_min_size(args.m as usize, args.min_size, args.seed)?.0
    };
    let mut manifest = RunManifest::new("sample", args, Some(args.seed))?;
    manifest.input(&args.model)?;
    write_edges(&args.out_edges, model.params.n(), &edges)?;
    manifest.output(&args.out_edges);
    manifest.write()?;
    println!("sampled {} edges", edges.len());
    Ok(())
}

fn printed_batch(params: &ndpp::ModelParams, m: usize, min_size: usize, seed: u64) -> Result<Vec<ndpp::Hyperedge>> {
    const MAX_REDRAWS: usize = 10_000;
    let mut edges = Vec::with_capacity(m);
    for k in 0..m {
        let mut rng = draw_rng(seed, k as u64);
        let mut draws = 0;
        let edge = loop {
            let e = sample_hyperedge_printed(params, &mut rng)?;
            if e.len() >= min_size {
                break e;
            }
            draws += 1;
            if draws == MAX_REDRAWS {
                return Err(UsageError(format!("no edge of size >= {min_size} after {MAX_REDRAWS} redraws")).into());
            }
        };
        edges.push(edge);
    }
    Ok(edges)
}

fn default_curve_path(report: &Path) -> PathBuf {
    let stem = report.file_stem().unwrap_or_default().to_string_lossy();
    report.with_file_name(format!("{stem}.curve.csv"))
}

pub fn eval(args: &EvalArgs) -> Result<()> {
    let model = read_model(&args.model)?;
    let n = model.params.n();
    let (test, header) = read_edges(&args.test_edges, 2, true)?;
    if test.n > n || (header && test.n != n) {
        return Err(ndpp::Error::Dimension(format!(
            "test edges span {} nodes but the model has {n}",
            test.n
        )))
        .with_context(|| format!("node universe of {}", args.test_edges.display()));
    }
    let metrics = match args.metric {
        MetricChoice::Auc => vec![Metric::Auc],
        MetricChoice::Mpr => vec![Metric::Mpr],
        MetricChoice::Both => vec![Metric::Auc, Metric::Mpr],
    };
    let report = evaluate(&model.params, &test.edges, &metrics, args.seed)?;
    let dataset = match &args.dataset {
        Some(d) => d.clone(),
        None => args.test_edges.file_stem().unwrap_or_default().to_string_lossy().into_owned(),
    };
    let rows = report.rows(&dataset, args.repeat);
    let mut manifest = RunManifest::new("eval", args, Some(args.seed))?;
    manifest.input(&args.model)?;
    manifest.input(&args.test_edges)?;
    write_text(&args.out_report, &report_csv(&rows))?;
    manifest.output(&args.out_report);
    if args.metric != MetricChoice::Auc {
        let curve = args.out_curve.clone().unwrap_or_else(|| default_curve_path(&args.out_report));
        write_text(&curve, &curve_csv(&report.rank_curve))?;
        manifest.output(&curve);
    }
    manifest.write()?;
    for r in &rows {
        println!("{} {:.6}", r.metric, r.value);
    }
    Ok(())
}

pub fn cv(args: &CvArgs) -> Result<()> {
    let data = read_input(&args.input)?;
    let counts = EdgeCounts::from_edges(data.n, &data.edges)?;
    let config = fit_config(&args.optimizer);
    let result = cross_validate_dimension(&counts, &args.dims, &config, args.folds)?;
    let mut manifest = RunManifest::new("cv", args, Some(config.seed))?;
    manifest.input(&args.input.edges)?;
    write_text(&args.out, &(serde_json::to_string_pretty(&result)? + "\n"))?;
    manifest.output(&args.out);
    manifest.write()?;
    for s in &result.scores {
        println!("d = {}: held-out log-likelihood per edge {:.6}", s.d, s.mean);
    }
    println!("chosen d = {}", result.chosen);
    Ok(())
}

pub fn align(args: &AlignArgs) -> Result<()> {
    let fit = read_model(&args.model)?;
    let truth = read_model(&args.truth)?;
    let report = aligned_errors(&fit.params, &truth.params)?;
    let mut csv = format!("{METRIC_CSV_HEADER}\n");
    for row in report_rows(&report, args.seed, args.m, truth.params.d(), args.s) {
        println!("{} {:.6}", row.metric, row.value);
        csv.push_str(&row.to_csv());
        csv.push('\n');
    }
    let mut manifest = RunManifest::new("align", args, Some(args.seed))?;
    manifest.input(&args.model)?;
    manifest.input(&args.truth)?;
    write_text(&args.out_report, &csv)?;
    manifest.output(&args.out_report);
    manifest.write()?;
    Ok(())
}

fn load_dataset(input: &DatasetInput) -> Result<HypergraphDataset> {
    // Filtering by size happens in preprocessing so that it is logged there.
    let raw = match (&input.edges, &input.nverts, &input.simplices) {
        (Some(path), _, _) => read_edges(path, 1, false)?.0,
        (None, Some(nv), Some(sx)) => read_nverts_simplices(nv, sx, &ReadOptions { min_size: 1, keep_ids: false })
            .with_context(|| format!("reading {} and {}", nv.display(), sx.display()))?,
        _ => return Err(UsageError("give --edges or both --nverts and --simplices".into()).into()),
    };
    let options = PreprocessOptions { min_size: input.min_size, max_size: input.max_size, top_k_nodes: input.top_k };
    Ok(preprocess(&raw, &options)?)
}

fn record_inputs(manifest: &mut RunManifest, input: &DatasetInput) -> Result<()> {
    for path in [&input.edges, &input.nverts, &input.simplices].into_iter().flatten() {
        manifest.input(path)?;
    }
    Ok(())
}

pub fn summarize(args: &SummarizeArgs) -> Result<()> {
    let data = load_dataset(&args.input)?;
    let summary = data.summary();
    println!("{summary}");
    if let Some(out) = &args.out {
        let mut manifest = RunManifest::new("summarize", args, None)?;
        record_inputs(&mut manifest, &args.input)?;
        write_text(out, &(serde_json::to_string_pretty(&summary)? + "\n"))?;
        manifest.output(out);
        manifest.write()?;
    }
    Ok(())
}

pub fn split(args: &SplitArgs) -> Result<()> {
    let data = load_dataset(&args.input)?;
    let spec = SplitSpec { train_fraction: args.train_fraction, repeats: args.repeats, seed: args.seed };
    let splits = ndpp::data::split(&data, &spec)?;
    let mut manifest = RunManifest::new("split", args, Some(args.seed))?;
    record_inputs(&mut manifest, &args.input)?;
    let all = args.out_dir.join("edges.txt");
    write_edges(&all, data.n, &data.edges)?;
    manifest.output(&all);
    let provenance = args.out_dir.join("provenance.json");
    write_text(&provenance, &(serde_json::to_string_pretty(&data.provenance)? + "\n"))?;
    manifest.output(&provenance);
    for s in &splits {
        for (name, edges) in [("train", &s.train), ("test", &s.test)] {
            let path = args.out_dir.join(format!("{name}_{}.txt", s.repeat));
            write_edges(&path, data.n, edges)?;
            manifest.output(&path);
        }
    }
    manifest.write()?;
    println!("{}", data.summary());
    println!("wrote {} splits to {}", splits.len(), args.out_dir.display());
    Ok(())
}

pub fn recovery(args: &RecoveryArgs) -> Result<()> {
    if args.ms.is_empty() || args.ms.contains(&0) || args.replicates == 0 {
        return Err(UsageError("sample sizes and replicate count must be positive".into()).into());
    }
    let spec = scenario_spec(&args.scenario, args.scenario.s);
    let truth = make_scenario(&spec)?;
    let models: &[bool] = if args.compare { &[false, true] } else { &[false] };
    let mut csv = format!("model,replicate,{METRIC_CSV_HEADER}\n");
    for &m in &args.ms {
        for r in 0..args.replicates {
            let seed = replicate_seed(spec.seed, m, r);
            let edges = experiment::simulate(&truth, m, seed)?;
            for &symmetric in models {
                let config = FitConfig {
                    d: spec.d,
                    starts: args.starts,
                    max_epochs: args.epochs,
                    step_size: args.lr,
                    symmetric,
                    seed,
                    ..FitConfig::default()
                };
                let (_, rep) = fit_replicate(&truth, &edges, r, &config)?;
                let label = if symmetric { "dpp" } else { "ndpp" };
                log::info!("m = {m} replicate {r} {label}: L error {:.4}", rep.errors.kernel);
                let mut rows = report_rows(&rep.errors, seed, m, spec.d, spec.s);
                rows.push(ndpp::alignment::MetricRow {
                    metric: "loglik".into(),
                    value: rep.log_likelihood_per_edge,
                    seed,
                    m,
                    d: spec.d,
                    s: spec.s,
                });
                for row in rows {
                    csv.push_str(&format!("{label},{r},{}\n", row.to_csv()));
                }
            }
        }
    }
    let mut manifest = RunManifest::new("experiment recovery", args, Some(spec.seed))?;
    write_text(&args.out, &csv)?;
    manifest.output(&args.out);
    manifest.write()?;
    println!("wrote {}", args.out.display());
    Ok(())
}

pub fn sizes(args: &SizesArgs) -> Result<()> {
    if args.s_values.is_empty() {
        return Err(UsageError("no scalings given".into()).into());
    }
    let scenario = ScenarioArgs {
        n: args.n,
        d: args.d,
        s: 0.0,
        latent: args.latent,
        kappa: ndpp::synth::DEFAULT_KAPPA,
        gamma: args.gamma,
        seed: args.seed,
    };
    let mut csv = String::from("s,size,count\n");
    for &s in &args.s_values {
        let truth = make_scenario(&scenario_spec(&scenario, s))?;
        let edges = experiment::simulate(&truth, args.m as usize, args.seed)?;
        let body = histogram_csv("", Some(s), &size_histogram(&edges, truth.n()));
        csv.push_str(body.trim_start_matches('\n'));
        let mean = edges.iter().map(|e| e.len()).sum::<usize>() as f64 / edges.len() as f64;
        println!("s = {s}: mean size {mean:.3}");
    }
    let mut manifest = RunManifest::new("experiment sizes", args, Some(args.seed))?;
    write_text(&args.out, &csv)?;
    manifest.output(&args.out);
    manifest.write()?;
    Ok(())
}
