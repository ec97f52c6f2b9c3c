//! `svehnn` command-line tool.
//!
//! Exit codes: 0 success, 1 failed check or run, 2 usage or input error,
//! 3 guarded refusal.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use svehnn::attribution::{BaselineKind, SizeDraw};
use svehnn::prob::VarianceMode;

#[derive(Parser, Debug)]
#[command(name = "svehnn", version, about = "Shapley explanations for point-cloud + tabular networks")]
pub struct Cli {
    /// Worker threads for parallel sections; results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a synthetic dataset.
    GenData(GenDataArgs),
    /// Train a classifier on a dataset.
    Train(TrainArgs),
    /// Explain one example with one estimator.
    Explain(ExplainArgs),
    /// Check the probabilistic layers against Monte-Carlo oracles.
    VerifyProb(VerifyArgs),
    /// Compare estimators against exact Shapley values.
    Benchmark(BenchmarkArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum Task {
    Xi,
    Hetero,
}

#[derive(Args, Debug)]
pub struct GenDataArgs {
    #[arg(long, value_enum, default_value = "xi")]
    pub task: Task,
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Coordinate noise of the X/I clouds.
    #[arg(long, default_value_t = 0.05)]
    pub jitter: f64,
    /// Points per cloud (hetero).
    #[arg(long = "points", default_value_t = 64)]
    pub k: usize,
    /// Tabular columns (hetero).
    #[arg(long = "tabular", default_value_t = 8)]
    pub d: usize,
    /// Informative tabular columns (hetero); defaults to half of them.
    #[arg(long)]
    pub informative: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum OptimizerArg {
    Adam,
    Sgd,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Model JSON output.
    #[arg(long)]
    pub out: PathBuf,
    /// Training report output; defaults to `<out>.report.json`.
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 40)]
    pub epochs: usize,
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, value_enum, default_value = "adam")]
    pub optimizer: OptimizerArg,
    /// Point-MLP widths, comma separated; the last is the latent size.
    #[arg(long, value_delimiter = ',', default_value = "32,64")]
    pub hidden: Vec<usize>,
    #[arg(long)]
    pub no_batchnorm: bool,
    #[arg(long, default_value_t = 0.25)]
    pub holdout: f64,
    #[arg(long, default_value_t = 1.0)]
    pub init_scale: f64,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum EstimatorArg {
    Exact,
    Sampling,
    Occlusion,
    Svehnn,
    SvehnnMc,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum BaselineArg {
    Zero,
    Hull,
}

impl From<BaselineArg> for BaselineKind {
    fn from(b: BaselineArg) -> Self {
        match b {
            BaselineArg::Zero => BaselineKind::Zero,
            BaselineArg::Hull => BaselineKind::Hull,
        }
    }
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum VarianceArg {
    AsWritten,
    BernoulliPoint,
}

impl From<VarianceArg> for VarianceMode {
    fn from(v: VarianceArg) -> Self {
        match v {
            VarianceArg::AsWritten => VarianceMode::AsWritten,
            VarianceArg::BernoulliPoint => VarianceMode::BernoulliPoint,
        }
    }
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum SizeDrawArg {
    Uniform,
    Stratified,
}

impl From<SizeDrawArg> for SizeDraw {
    fn from(s: SizeDrawArg) -> Self {
        match s {
            SizeDrawArg::Uniform => SizeDraw::Uniform,
            SizeDrawArg::Stratified => SizeDraw::Stratified,
        }
    }
}

#[derive(Args, Debug)]
pub struct ExplainArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Dataset holding the example (with `--index`); also the hull source.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub index: usize,
    /// Standalone input JSON `{"points": [[x,y,z],...], "tabular": [...]}`.
    #[arg(long, conflicts_with = "index")]
    pub input: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub estimator: EstimatorArg,
    /// Permutations (sampling) or subset sizes per feature (svehnn-mc).
    #[arg(long, default_value_t = 2000)]
    pub m: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value = "zero")]
    pub baseline: BaselineArg,
    /// Dataset for the hull template; defaults to `--data`.
    #[arg(long)]
    pub hull_data: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "as-written")]
    pub variance_mode: VarianceArg,
    #[arg(long, value_enum, default_value = "uniform")]
    pub size_draw: SizeDrawArg,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct VerifyArgs {
    #[arg(long)]
    pub seed: u64,
    #[arg(long, default_value_t = 1_000_000)]
    pub samples: usize,
    #[arg(long, default_value_t = 50_000)]
    pub subset_samples: usize,
    #[arg(long, default_value_t = 20)]
    pub configs: usize,
    /// Inject a known fault to confirm the checks can fail.
    #[arg(long, value_parser = ["relu-mean"])]
    pub sabotage: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct BenchmarkArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub seed: u64,
    /// Number of examples, starting at `--offset`.
    #[arg(long, default_value_t = 100)]
    pub examples: usize,
    #[arg(long, default_value_t = 0)]
    pub offset: usize,
    #[arg(long, value_enum, default_value = "zero")]
    pub baseline: BaselineArg,
    /// Estimator rows such as `exact`, `sampling@2000`, `occlusion`,
    /// `svehnn`, `svehnn[bernoulli_point]`, `svehnn_mc@64`; defaults to the
    /// five reference rows. Comma separated; repeatable.
    #[arg(long)]
    pub estimators: Vec<String>,
    /// Append a `svehnn[bernoulli_point]` row.
    #[arg(long)]
    pub both_variance_modes: bool,
    #[arg(long)]
    pub out_csv: PathBuf,
    #[arg(long)]
    pub out_json: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(commands::exit_code(&e))
        }
    }
}
