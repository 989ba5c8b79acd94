//! `camtrap`: fetch, prepare, split, evaluate and report on camera-trap
//! detection datasets.
//!
//! Exit codes: 0 success, 2 usage error, 3 invalid input, 4 file-system
//! error, 5 remote failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use camtrap_core::Error;

mod commands;
mod config;

#[derive(Parser)]
#[command(name = "camtrap", version, about = "Camera-trap detection dataset toolkit")]
struct Cli {
    /// TOML file with default settings; flags override it.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Download annotated images from the remote API into a local dataset.
    Fetch(FetchArgs),
    /// Filter rare species, assign class indices and write dataset statistics.
    Prepare(PrepareArgs),
    /// Stratified k-fold split exported as training layouts.
    Split(SplitArgs),
    /// Score per-fold predictions against the manifest.
    Evaluate(EvaluateArgs),
    /// Training curves and a markdown summary.
    Report(ReportArgs),
}

#[derive(Args)]
pub struct FetchArgs {
    /// Base URL of the API.
    #[arg(long)]
    pub endpoint: Option<String>,
    /// Dataset directory to create or resume.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Restrict the listing to one project.
    #[arg(long)]
    pub project: Option<String>,
    /// Concurrent downloads [default: 4].
    #[arg(long)]
    pub workers: Option<usize>,
    /// Attempts per request before giving up [default: 5].
    #[arg(long)]
    pub max_attempts: Option<u32>,
}

#[derive(Args)]
pub struct PrepareArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Minimum number of images a species needs to be kept [default: 40].
    #[arg(long)]
    pub min_count: Option<usize>,
    /// Species folded into the "Other" class.
    #[arg(long = "other", value_delimiter = ',', value_name = "NAME[,NAME...]")]
    pub other: Vec<String>,
    /// Output directory [default: `prepared/` next to the manifest].
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct SplitArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Number of folds [default: 5].
    #[arg(long)]
    pub k: Option<usize>,
    /// Shuffle seed [default: 0].
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// One predictions file per fold.
    #[arg(long, value_delimiter = ',', required = true, value_name = "FILE[,FILE...]")]
    pub preds: Vec<PathBuf>,
    /// Split plan from `split`; fixes each fold's image set.
    #[arg(long)]
    pub plan: Option<PathBuf>,
    /// Matching IoU [default: 0.5].
    #[arg(long)]
    pub iou: Option<f64>,
    /// Confidence cut-off for the confusion matrix [default: 0.25].
    #[arg(long)]
    pub conf: Option<f64>,
    /// Also write fold-averaged metrics.
    #[arg(long)]
    pub per_fold_mean: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct ReportArgs {
    #[arg(long)]
    pub epoch_log: PathBuf,
    #[arg(long)]
    pub metrics: PathBuf,
    /// Plateau window in epochs [default: 9].
    #[arg(long)]
    pub window: Option<usize>,
    /// Plateau relative-change tolerance [default: 0.01].
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::InvalidInput(_) | Error::Parse { .. } => 3,
        Error::Io { .. } | Error::MissingMedia(_) => 4,
        Error::Auth { .. } | Error::Remote(_) | Error::PartialFetch { .. } => 5,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    let result = config::FileConfig::load(cli.config.as_deref()).and_then(|cfg| match cli.command {
        Command::Fetch(a) => commands::fetch(a, &cfg),
        Command::Prepare(a) => commands::prepare(a, &cfg),
        Command::Split(a) => commands::split(a, &cfg),
        Command::Evaluate(a) => commands::evaluate(a, &cfg),
        Command::Report(a) => commands::report(a, &cfg),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            if let Error::PartialFetch { failures, .. } = &err {
                for (id, why) in failures {
                    eprintln!("  {id}: {why}");
                }
            }
            ExitCode::from(exit_code(&err))
        }
    }
}
