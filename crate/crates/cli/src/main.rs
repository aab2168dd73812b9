//! `ndpp`: simulate, fit, sample, evaluate and compare hypergraph NDPP models.

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

pub const EXIT_USAGE: u8 = 2;
pub const EXIT_DATA: u8 = 3;
pub const EXIT_NUMERICAL: u8 = 4;

#[derive(Debug, Parser)]
#[command(name = "ndpp", version, about = "Nonsymmetric DPP models for non-uniform hypergraphs")]
struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true, env = "NDPP_THREADS")]
    threads: Option<usize>,

    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic model and sample edges from it.
    Simulate(SimulateArgs),
    /// Fit a model to an edge list by maximum likelihood.
    Fit(FitArgs),
    /// Draw edges from a saved model.
    Sample(SampleArgs),
    /// Score a model on held-out edges (AUC, mean percentile rank).
    Eval(EvalArgs),
    /// Choose the latent dimension by k-fold cross-validation.
    Cv(CvArgs),
    /// Compare fitted parameters with the generating ones after alignment.
    Align(AlignArgs),
    /// Print size statistics of a dataset.
    Summarize(SummarizeArgs),
    /// Preprocess a dataset and write repeated train/test splits.
    Split(SplitArgs),
    /// Simulation studies that emit plot-ready CSVs.
    #[command(subcommand)]
    Experiment(ExperimentCommand),
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Latent {
    Uniform,
    Vmf,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum MetricChoice {
    Auc,
    Mpr,
    Both,
}

#[derive(Debug, Args, Serialize)]
pub struct ScenarioArgs {
    /// Number of nodes.
    #[arg(long)]
    pub n: usize,
    /// Latent dimension.
    #[arg(long, default_value_t = 3)]
    pub d: usize,
    /// Popularity scaling; larger values give larger edges.
    #[arg(long, default_value_t = 3.0)]
    pub s: f64,
    #[arg(long, value_enum, default_value_t = Latent::Uniform)]
    pub latent: Latent,
    /// Concentration of the vMF clusters.
    #[arg(long, default_value_t = ndpp::synth::DEFAULT_KAPPA)]
    pub kappa: f64,
    /// Asymmetry strength of the generating model.
    #[arg(long, default_value_t = ndpp::synth::DEFAULT_GAMMA)]
    pub gamma: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args, Serialize)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    /// Number of edges to sample.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub m: u64,
    /// Edges smaller than this are redrawn.
    #[arg(long, default_value_t = ndpp::data::dataset::DEFAULT_MIN_SIZE)]
    pub min_size: usize,
    #[arg(long)]
    pub out_edges: PathBuf,
    #[arg(long)]
    pub out_params: PathBuf,
    /// Optional CSV of edge counts by size.
    #[arg(long)]
    pub out_hist: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct OptimizerArgs {
    #[arg(long, default_value_t = 3)]
    pub d: usize,
    /// Independent random starts; the best one is kept.
    #[arg(long, default_value_t = 5)]
    pub starts: usize,
    #[arg(long, default_value_t = 2000)]
    pub epochs: usize,
    /// Initial Adam step size.
    #[arg(long, default_value_t = 0.01)]
    pub lr: f64,
    #[arg(long, default_value_t = ndpp::params::DEFAULT_GAMMA_MAX)]
    pub gamma_max: f64,
    /// Fit the symmetric model (gamma = 0, no skew part).
    #[arg(long)]
    pub symmetric: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args, Serialize)]
pub struct EdgeInput {
    /// Edge list, one whitespace-separated edge per line.
    #[arg(long)]
    pub edges: PathBuf,
    /// Edges smaller than this are dropped on reading.
    #[arg(long, default_value_t = ndpp::data::dataset::DEFAULT_MIN_SIZE)]
    pub min_size: usize,
    /// Use node ids as given. Implied when the file has a `# nodes:` header.
    #[arg(long)]
    pub keep_ids: bool,
}

#[derive(Debug, Args, Serialize)]
pub struct FitArgs {
    #[command(flatten)]
    pub input: EdgeInput,
    #[command(flatten)]
    pub optimizer: OptimizerArgs,
    #[arg(long)]
    pub out_model: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct SampleArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub m: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = ndpp::data::dataset::DEFAULT_MIN_SIZE)]
    pub min_size: usize,
    /// Use the low-rank recursion as printed, which ignores the popularity
    /// term of the marginal kernel. For comparison only.
    #[arg(long)]
    pub experimental_printed_sampler: bool,
    #[arg(long)]
    pub out_edges: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Held-out edges, using the model's node ids.
    #[arg(long)]
    pub test_edges: PathBuf,
    #[arg(long, value_enum, default_value_t = MetricChoice::Both)]
    pub metric: MetricChoice,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out_report: PathBuf,
    /// Rank-curve CSV; defaults to `<out-report stem>.curve.csv`.
    #[arg(long)]
    pub out_curve: Option<PathBuf>,
    /// Dataset label for the report rows; defaults to the test file stem.
    #[arg(long)]
    pub dataset: Option<String>,
    #[arg(long, default_value_t = 0)]
    pub repeat: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct CvArgs {
    #[command(flatten)]
    pub input: EdgeInput,
    /// Candidate dimensions.
    #[arg(long, value_delimiter = ',', required = true)]
    pub dims: Vec<usize>,
    #[arg(long, default_value_t = ndpp::estimation::cv::DEFAULT_FOLDS)]
    pub folds: usize,
    #[command(flatten)]
    pub optimizer: OptimizerArgs,
    /// JSON with per-dimension held-out scores.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct AlignArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Generating parameters, as written by `simulate --out-params`.
    #[arg(long)]
    pub truth: PathBuf,
    /// Sample size recorded in the CSV rows.
    #[arg(long, default_value_t = 0)]
    pub m: usize,
    /// Scaling recorded in the CSV rows.
    #[arg(long, default_value_t = 0.0)]
    pub s: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out_report: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct DatasetInput {
    /// Edge list input.
    #[arg(long, conflicts_with_all = ["nverts", "simplices"], required_unless_present = "nverts")]
    pub edges: Option<PathBuf>,
    /// Edge sizes, one per line (with --simplices).
    #[arg(long, requires = "simplices")]
    pub nverts: Option<PathBuf>,
    /// Concatenated node ids of all edges (with --nverts).
    #[arg(long, requires = "nverts")]
    pub simplices: Option<PathBuf>,
    #[arg(long, default_value_t = ndpp::data::dataset::DEFAULT_MIN_SIZE)]
    pub min_size: usize,
    #[arg(long)]
    pub max_size: Option<usize>,
    /// Keep only the most frequent nodes.
    #[arg(long)]
    pub top_k: Option<usize>,
}

#[derive(Debug, Args, Serialize)]
pub struct SummarizeArgs {
    #[command(flatten)]
    pub input: DatasetInput,
    /// Optional JSON copy of the summary.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct SplitArgs {
    #[command(flatten)]
    pub input: DatasetInput,
    #[arg(long, default_value_t = 0.8)]
    pub train_fraction: f64,
    #[arg(long, default_value_t = 5)]
    pub repeats: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Receives `edges.txt`, `train_<r>.txt` and `test_<r>.txt`.
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Subcommand)]
enum ExperimentCommand {
    /// Relative errors against sample size over replicated fits.
    Recovery(RecoveryArgs),
    /// Edge-size histograms across popularity scalings.
    Sizes(SizesArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct RecoveryArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    /// Sample sizes.
    #[arg(long, value_delimiter = ',', default_value = "250,1000,4000")]
    pub ms: Vec<usize>,
    #[arg(long, default_value_t = 10)]
    pub replicates: usize,
    #[arg(long, default_value_t = 5)]
    pub starts: usize,
    #[arg(long, default_value_t = 2000)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0.01)]
    pub lr: f64,
    /// Also fit the symmetric model to every sample.
    #[arg(long)]
    pub compare: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct SizesArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 3)]
    pub d: usize,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub m: u64,
    /// Popularity scalings.
    #[arg(long, value_delimiter = ',', default_value = "1,2,3,4,5,6,7")]
    pub s_values: Vec<f64>,
    #[arg(long, value_enum, default_value_t = Latent::Uniform)]
    pub latent: Latent,
    #[arg(long, default_value_t = ndpp::synth::DEFAULT_GAMMA)]
    pub gamma: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_USAGE) } else { ExitCode::SUCCESS };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Some(threads) = cli.threads {
        if threads == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(EXIT_USAGE);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_USAGE);
        }
    }
    let result = match &cli.command {
        Command::Simulate(a) => commands::simulate(a),
        Command::Fit(a) => commands::fit(a),
        Command::Sample(a) => commands::sample(a),
        Command::Eval(a) => commands::eval(a),
        Command::Cv(a) => commands::cv(a),
        Command::Align(a) => commands::align(a),
        Command::Summarize(a) => commands::summarize(a),
        Command::Split(a) => commands::split(a),
        Command::Experiment(ExperimentCommand::Recovery(a)) => commands::recovery(a),
        Command::Experiment(ExperimentCommand::Sizes(a)) => commands::sizes(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(commands::exit_code(&e))
        }
    }
}
