//! `horizon`: headless front-end over `horizon-core`.
//!
//! Every subcommand parses flags, calls the library and writes files or
//! stdout. Exit codes: 0 success, 1 runtime failure, 2 usage error.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

pub mod metrics;
pub mod report;
pub mod scan;
pub mod simulate;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad flags or unusable input files.
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

pub type CliResult<T = ()> = Result<T, CliError>;

pub(crate) fn read_input(path: &Path) -> CliResult<Vec<u8>> {
    std::fs::read(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

pub(crate) fn write_output(path: &Path, bytes: &[u8]) -> CliResult {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| CliError::Runtime(format!("{}: {e}", parent.display())))?;
    }
    std::fs::write(path, bytes).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

#[derive(Debug, Parser)]
#[command(
    name = "horizon",
    version,
    about = "News scans, screening simulations, metrics and reports"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Retrieve news for a list of queries and write the three export files.
    Scan(ScanArgs),
    /// Replay the active-learning loop on a fully labelled dataset.
    Simulate(SimulateArgs),
    /// Screening metrics for one screening order.
    Metrics(MetricsArgs),
    /// Mini-report of a saved project.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct ScanArgs {
    /// One query per line.
    #[arg(long)]
    pub queries: PathBuf,
    /// Earliest publication date, YYYY-MM-DD.
    #[arg(long)]
    pub from: Option<String>,
    /// Latest publication date, YYYY-MM-DD.
    #[arg(long)]
    pub to: Option<String>,
    #[arg(long, default_value_t = horizon_core::retrieval::MAX_PER_QUERY)]
    pub max_per_query: usize,
    /// Resolve and scrape the full text of every unique article.
    #[arg(long)]
    pub scrape: bool,
    /// Keep feed links as they are instead of resolving publisher URLs.
    #[arg(long)]
    pub no_decode_redirects: bool,
    #[arg(long)]
    pub out: PathBuf,
    /// Serve feeds and pages from a fixture directory (see
    /// `FixtureTransport::from_dir`). Delays then run on a virtual clock.
    #[arg(long, value_name = "DIR")]
    pub fixtures: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RankerArg {
    Engine,
    /// Every relevant record first; a closed-form smoke test.
    Oracle,
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SdArg {
    Population,
    Sample,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub text_col: String,
    #[arg(long)]
    pub title_col: Option<String>,
    #[arg(long)]
    pub id_col: Option<String>,
    #[arg(long)]
    pub label_col: String,
    /// Cell value marking a relevant record.
    #[arg(long)]
    pub positive: String,
    /// Characters of reference text kept per record; 0 keeps everything.
    #[arg(long, default_value_t = horizon_core::record::DEFAULT_TRUNCATE_TO)]
    pub truncate: usize,
    #[arg(long, default_value_t = horizon_core::eval::DEFAULT_RUNS)]
    pub runs: usize,
    /// Seed references per run, or `auto` for the default. Datasets with
    /// fewer than 30 relevant records always use one.
    #[arg(long, default_value = "auto")]
    pub seeds: String,
    #[arg(long, default_value_t = horizon_core::eval::DEFAULT_BATCH)]
    pub batch: usize,
    /// Every n-th rerank uses the classifier; 0 disables it.
    #[arg(long, default_value_t = 5)]
    pub sgd_period: u32,
    /// Saved judgement set whose votes are added to the scores.
    #[arg(long)]
    pub llm_judgements: Option<PathBuf>,
    #[arg(long, default_value_t = 42)]
    pub rng: u64,
    #[arg(long, value_enum, default_value_t = RankerArg::Engine)]
    pub ranker: RankerArg,
    /// Leave seeds out of the evaluated screening order.
    #[arg(long)]
    pub seeds_free: bool,
    #[arg(long, value_enum, default_value_t = SdArg::Population)]
    pub sd: SdArg,
    #[arg(long, default_value_t = 512)]
    pub embedding_dim: usize,
    /// Worker threads for parallel runs; defaults to all cores.
    #[arg(long)]
    pub jobs: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct MetricsArgs {
    /// CSV in screening order with a `relevant` (or `label`) column.
    #[arg(long)]
    pub trajectory: PathBuf,
    /// Target recall for WSS and TNR.
    #[arg(long, default_value_t = horizon_core::eval::TARGET_RECALL)]
    pub r: f64,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Saved project: the CSV or its `.project.json` sidecar.
    #[arg(long)]
    pub project: PathBuf,
    /// Write the report here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write the gain curve as CSV.
    #[arg(long)]
    pub gain_curve: Option<PathBuf>,
}

pub fn run(cli: Cli, stdout: &mut dyn Write, stderr: &mut dyn Write) -> CliResult {
    match cli.command {
        Command::Scan(a) => scan::run(&a, stdout, stderr),
        Command::Simulate(a) => simulate::run(&a, stdout, stderr),
        Command::Metrics(a) => metrics::run(&a, stdout),
        Command::Report(a) => report::run(&a, stdout),
    }
}
