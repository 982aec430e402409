//! Command-line front end. Every subcommand writes a [`RunManifest`]
//! before its outputs.
//!
//! Exit codes: 0 success, 1 invalid input or configuration, 2 I/O
//! failure, 3 remote endpoint failure.

mod commands;
mod manifest;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use thiserror::Error;

use crate::annotate::Target;
use crate::data::DataError;
use crate::llm::LlmError;
use crate::metrics::{Averaging, MetricsError};
use crate::policy::{ItemKind, PolicyError};
use crate::table::TableError;
use crate::trainer::TrainError;

pub use commands::{
    annotate, eval_reduce, qa, reduce, report, sft, synth, train_rl, AnswerRecord, ReductionRecord, RlJob,
    SftJob,
};
pub use manifest::{manifest_path, RunManifest, MANIFEST_FORMAT_VERSION, VERSION};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Remote(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Io(_) => 2,
            CliError::Remote(_) => 3,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        match e {
            DataError::Io(e) => CliError::Io(e.to_string()),
            other => CliError::Config(other.to_string()),
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Io(e) => CliError::Io(e.to_string()),
            other => CliError::Config(other.to_string()),
        }
    }
}

impl From<LlmError> for CliError {
    fn from(e: LlmError) -> Self {
        match e {
            LlmError::Config(m) => CliError::Config(m),
            other => CliError::Remote(other.to_string()),
        }
    }
}

impl From<PolicyError> for CliError {
    fn from(e: PolicyError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<MetricsError> for CliError {
    fn from(e: MetricsError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<TableError> for CliError {
    fn from(e: TableError) -> Self {
        CliError::Config(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(name = "tabreduce", version = VERSION, about = "Learned table reduction for question answering")]
pub struct Cli {
    /// Worker threads for every parallel stage (default: all cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Log progress to standard error.
    #[arg(long, short, global = true)]
    pub verbose: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Add gold relevance annotations to a dataset.
    Annotate(AnnotateArgs),
    /// Generate an annotated synthetic dataset.
    Synth(SynthArgs),
    /// Supervised training of a column or row policy.
    Sft(SftArgs),
    /// PPO fine-tuning of a trained policy.
    TrainRl(TrainRlArgs),
    /// Greedy-decode a policy and score it against gold annotations.
    EvalReduce(EvalReduceArgs),
    /// Write column-then-row reductions for every instance.
    Reduce(ReduceArgs),
    /// Answer questions over full, gold-reduced or predicted-reduced tables.
    Qa(QaArgs),
    /// Length-bucketed accuracy and reduction quality.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum TargetArg {
    Columns,
    Rows,
    Both,
}

impl From<TargetArg> for Target {
    fn from(t: TargetArg) -> Self {
        match t {
            TargetArg::Columns => Target::Columns,
            TargetArg::Rows => Target::Rows,
            TargetArg::Both => Target::Both,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum KindArg {
    Columns,
    Rows,
}

impl From<KindArg> for ItemKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Columns => ItemKind::Columns,
            KindArg::Rows => ItemKind::Rows,
        }
    }
}

/// Which part of a table-level split to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitArg {
    #[default]
    All,
    Train,
    Valid,
    Test,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SplitSelect {
    /// Restrict to one part of the 80/10/10 table-level split.
    #[arg(long, value_enum, default_value_t = SplitArg::All)]
    pub split: SplitArg,
    #[arg(long, default_value_t = 0)]
    pub split_seed: u64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct AnnotateArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = TargetArg::Both)]
    pub target: TargetArg,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 2000)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 4)]
    pub min_columns: usize,
    #[arg(long, default_value_t = 10)]
    pub max_columns: usize,
    #[arg(long, default_value_t = 5)]
    pub min_rows: usize,
    #[arg(long, default_value_t = 60)]
    pub max_rows: usize,
    #[arg(long, default_value_t = 200)]
    pub value_vocab: usize,
    #[arg(long, default_value_t = 3)]
    pub questions_per_table: usize,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SftArgs {
    /// Annotated dataset; split by table with the configured seed.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum)]
    pub target: KindArg,
    /// Run directory.
    #[arg(long)]
    pub out: PathBuf,
    /// JSON file with training settings (see `SftJob`).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Also write every epoch's parameters under `checkpoints/`.
    #[arg(long)]
    pub save_checkpoints: bool,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TrainRlArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Model file to start from; also the frozen reference policy.
    #[arg(long)]
    pub init: PathBuf,
    #[arg(long, value_enum)]
    pub target: KindArg,
    #[arg(long)]
    pub out: PathBuf,
    /// JSON file with PPO settings (see `RlJob`).
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct EvalReduceArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
    /// Output report.json.
    #[arg(long)]
    pub report: PathBuf,
    #[command(flatten)]
    pub select: SplitSelect,
    /// Comma-separated ascending token boundaries for a per-length breakdown.
    #[arg(long)]
    pub buckets: Option<String>,
    #[arg(long, value_enum, default_value_t = AveragingArg::Macro)]
    pub averaging: AveragingArg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum AveragingArg {
    Macro,
    Micro,
}

impl From<AveragingArg> for Averaging {
    fn from(a: AveragingArg) -> Self {
        match a {
            AveragingArg::Macro => Averaging::Macro,
            AveragingArg::Micro => Averaging::Micro,
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ReduceArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Column policy; not needed with --gold-columns.
    #[arg(long)]
    pub col_model: Option<PathBuf>,
    /// Row policy; without it every row is kept.
    #[arg(long)]
    pub row_model: Option<PathBuf>,
    /// Use annotated columns instead of predicted ones.
    #[arg(long)]
    pub gold_columns: bool,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub select: SplitSelect,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ContextArg {
    /// The whole table.
    Full,
    /// Annotated columns and rows.
    Gold,
    /// Reductions from --reductions.
    Reduced,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct QaArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Output answers JSONL.
    #[arg(long)]
    pub out: PathBuf,
    /// Chat-completions base URL.
    #[arg(long, conflicts_with = "mock", required_unless_present = "mock")]
    pub endpoint: Option<String>,
    /// Answer with the offline reader that executes the gold SQL.
    #[arg(long)]
    pub mock: bool,
    /// Context token budget of the reader.
    #[arg(long)]
    pub budget: Option<usize>,
    #[arg(long, value_enum, default_value_t = ContextArg::Full)]
    pub context: ContextArg,
    /// Reductions JSONL written by `reduce`; required with --context reduced.
    #[arg(long)]
    pub reductions: Option<PathBuf>,
    /// JSON file with client settings (model, retries, api_key_env, ...).
    #[arg(long)]
    pub llm_config: Option<PathBuf>,
    #[command(flatten)]
    pub select: SplitSelect,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ReportArgs {
    /// Answers JSONL written by `qa`.
    #[arg(long)]
    pub answers: PathBuf,
    /// Reductions JSONL written by `reduce`.
    #[arg(long)]
    pub reductions: Option<PathBuf>,
    /// Comma-separated ascending token boundaries, e.g. `0,200,400`.
    #[arg(long)]
    pub buckets: String,
    /// Output report.json.
    #[arg(long)]
    pub out: PathBuf,
    /// Also write per-bucket accuracy as CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

/// Execute a parsed command line. `argv` is recorded in the manifest.
pub fn run(cli: &Cli, argv: &[String]) -> Result<(), CliError> {
    let jobs = cli
        .jobs
        .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1));
    if jobs == 0 {
        return Err(CliError::Config("--jobs must be at least 1".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| CliError::Config(e.to_string()))?;
    pool.install(|| match &cli.command {
        Command::Annotate(a) => annotate(a, jobs, argv).map(drop),
        Command::Synth(a) => synth(a, argv).map(drop),
        Command::Sft(a) => sft(a, argv).map(drop),
        Command::TrainRl(a) => train_rl(a, argv).map(drop),
        Command::EvalReduce(a) => eval_reduce(a, argv).map(drop),
        Command::Reduce(a) => reduce(a, argv).map(drop),
        Command::Qa(a) => qa(a, argv).map(drop),
        Command::Report(a) => report(a, argv).map(drop),
    })
}

/// Parse `args`, run, and return the process exit code.
pub fn main_with_args(args: Vec<String>) -> i32 {
    let cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let level = if cli.verbose { "info" } else { "warn" };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();
    match run(&cli, &args) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
