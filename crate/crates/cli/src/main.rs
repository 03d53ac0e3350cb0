//! `vitalsign`: command-line front end for the heart-rate mortality pipeline.
//!
//! Commands chain through files: `synth` writes a cohort, `preprocess` cleans
//! it, `extract` turns it into a feature table, and `train`, `evaluate`,
//! `importance` and `roc` work from that table.

mod commands;
mod config;
mod failure;

use std::ffi::OsString;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgAction, Args, CommandFactory, Parser, Subcommand, ValueEnum};

use failure::Failure;
use vitalsign::record_io::RecordFormat;

#[derive(Debug, Parser)]
#[command(
    name = "vitalsign",
    version,
    about = "Early mortality prediction from first-hour heart-rate signals"
)]
pub struct Cli {
    /// Worker threads for per-record and per-fold stages; 0 uses every core.
    #[arg(long, global = true, env = "VITALSIGN_JOBS", default_value_t = 0)]
    pub jobs: usize,

    /// Key-value settings file; flags on the command line take precedence.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic CCU cohort (HRW records plus manifest).
    Synth(SynthArgs),
    /// Clean, smooth and resample every record of a cohort.
    Preprocess(PreprocessArgs),
    /// Compute the 12 signal features of preprocessed records.
    Extract(ExtractArgs),
    /// Fit one classifier on a feature table.
    Train(TrainArgs),
    /// Cross-validate classifiers and write reports, ROC points and metrics.
    Evaluate(EvaluateArgs),
    /// Rank features by decision-tree predictor importance.
    Importance(ImportanceArgs),
    /// ROC points of a trained model on a feature table.
    Roc(RocArgs),
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
pub struct SynthArgs {
    /// Output directory.
    #[arg(long, default_value = "cohort")]
    pub out: PathBuf,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    #[arg(long, default_value_t = 2614)]
    pub n_survived: usize,
    #[arg(long, default_value_t = 365)]
    pub n_passed: usize,
    /// Record length in seconds.
    #[arg(long, default_value_t = 3600.0)]
    pub duration_s: f64,
    /// Sampling rates drawn per record, comma-separated.
    #[arg(long, value_delimiter = ',', default_value = "1,0.5,0.17")]
    pub rates_hz: Vec<f64>,
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
pub struct PreprocessArgs {
    /// Cohort manifest to read.
    #[arg(long, default_value = "cohort/manifest.csv")]
    pub manifest: PathBuf,
    /// Output directory for cleaned records and their manifest.
    #[arg(long, default_value = "preprocessed")]
    pub out: PathBuf,
    /// Smoothing window in samples at the target rate.
    #[arg(long, default_value_t = 300)]
    pub window: usize,
    #[arg(long, default_value_t = 1.0)]
    pub target_hz: f64,
    /// Keep only the first hour after resampling.
    #[arg(long, action = ArgAction::Set, num_args = 0..=1, default_value_t = true, default_missing_value = "true")]
    pub first_hour_only: bool,
    /// Smooth over a full hour, overriding --window.
    #[arg(long, action = ArgAction::Set, num_args = 0..=1, default_value_t = false, default_missing_value = "true")]
    pub one_hour_window: bool,
    /// Record format written (hrw or csv).
    #[arg(long, default_value = "hrw")]
    pub format: RecordFormat,
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
pub struct ExtractArgs {
    /// Manifest of preprocessed records.
    #[arg(long, default_value = "preprocessed/manifest.csv")]
    pub manifest: PathBuf,
    /// Feature table CSV to write.
    #[arg(long, default_value = "features.csv")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BalanceMethod {
    None,
    Asuwo,
}

#[derive(Debug, Args)]
pub struct BalanceArgs {
    /// Minority oversampling applied to training rows.
    #[arg(long, value_enum, default_value_t = BalanceMethod::Asuwo)]
    pub balance: BalanceMethod,
    /// Minority to majority ratio after oversampling.
    #[arg(long, default_value_t = 1.0)]
    pub target_ratio: f64,
    /// Majority neighbours used to veto noisy minority rows.
    #[arg(long, default_value_t = 5)]
    pub k_majority: usize,
    /// Minority neighbours used for cluster weighting.
    #[arg(long, default_value_t = 5)]
    pub k_intra: usize,
    /// Quantile of pairwise distances that caps cluster merging.
    #[arg(long, default_value_t = 0.9)]
    pub linkage_quantile: f64,
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
pub struct TrainArgs {
    /// Feature table CSV.
    #[arg(long, default_value = "features.csv")]
    pub data: PathBuf,
    /// Classifier to fit.
    #[arg(long, default_value = "decision_tree")]
    pub model: vitalsign::models::ModelKind,
    /// Model document to write.
    #[arg(long, default_value = "model.json")]
    pub out: PathBuf,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    /// Z-score features before training.
    #[arg(long, action = ArgAction::Set, num_args = 0..=1, default_value_t = true, default_missing_value = "true")]
    pub normalize: bool,
    #[command(flatten)]
    pub balance: BalanceArgs,
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
pub struct EvaluateArgs {
    /// Feature table CSV.
    #[arg(long, default_value = "features.csv")]
    pub data: PathBuf,
    /// Comma-separated classifiers, or `all`.
    #[arg(long, value_delimiter = ',', default_value = "all")]
    pub models: Vec<String>,
    #[arg(long, default_value_t = 10)]
    pub folds: usize,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    /// Score threshold for the point metrics.
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f64,
    /// Keep the class ratio in every fold.
    #[arg(long, action = ArgAction::Set, num_args = 0..=1, default_value_t = true, default_missing_value = "true")]
    pub stratified: bool,
    /// Z-score features, fitted on each training fold.
    #[arg(long, action = ArgAction::Set, num_args = 0..=1, default_value_t = true, default_missing_value = "true")]
    pub normalize: bool,
    #[command(flatten)]
    pub balance: BalanceArgs,
    /// Output directory.
    #[arg(long, default_value = "evaluation")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
pub struct ImportanceArgs {
    /// Decision-tree model document. When absent a tree is fitted on --data.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Feature table CSV used when no --model is given.
    #[arg(long, default_value = "features.csv")]
    pub data: PathBuf,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    #[arg(long, action = ArgAction::Set, num_args = 0..=1, default_value_t = true, default_missing_value = "true")]
    pub normalize: bool,
    #[command(flatten)]
    pub balance: BalanceArgs,
    /// Ranking CSV to write.
    #[arg(long, default_value = "importance.csv")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
pub struct RocArgs {
    /// Model document.
    #[arg(long, default_value = "model.json")]
    pub model: PathBuf,
    /// Feature table CSV to score.
    #[arg(long, default_value = "features.csv")]
    pub data: PathBuf,
    /// ROC points CSV to write.
    #[arg(long, default_value = "roc.csv")]
    pub out: PathBuf,
}

fn report(f: &Failure) -> ExitCode {
    eprintln!("error: {f}");
    ExitCode::from(f.exit_code() as u8)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args: Vec<OsString> = std::env::args_os().collect();
    let args = match config::expand_args(args, &Cli::command()) {
        Ok(a) => a,
        Err(f) => return report(&f),
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new()
        .num_threads(cli.jobs)
        .build()
    {
        Ok(p) => p,
        Err(e) => {
            return report(&Failure::Usage(format!(
                "cannot start {} workers: {e}",
                cli.jobs
            )))
        }
    };
    match pool.install(|| commands::run(&cli.command)) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(f) => report(&f),
    }
}
