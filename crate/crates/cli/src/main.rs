//! `voicerisk` command line: extract, evaluate, analyze, synth, report.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgAction, Args, Parser, Subcommand};
use thiserror::Error;

/// Exit status 2, 3 and 4 respectively.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("internal error: {0}")]
    Internal(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Internal(_) => 4,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "voicerisk", version, about = "Speech-based suicide-risk screening pipeline")]
pub struct Cli {
    /// JSON config file; flags take precedence over its keys.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed for every random choice. Required (here or in the config) except for `report`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; outputs do not depend on it.
    #[arg(long, global = true, env = "VOICERISK_THREADS")]
    pub threads: Option<usize>,
    /// -v info, -vv debug.
    #[arg(short, long, global = true, action = ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Segment every manifest recording and write the GeMLite feature CSV.
    Extract(ExtractArgs),
    /// Run the LOSO grid and write report.json and report.md.
    Evaluate(EvaluateArgs),
    /// Rank, prune and test features of one cell; write analysis.json.
    Analyze(AnalyzeArgs),
    /// Generate a synthetic cohort from a JSON cohort spec.
    Synth(SynthArgs),
    /// Render markdown from report.json (and optionally analysis.json).
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct Inputs {
    /// Manifest CSV.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Directory of feature CSVs [default: <manifest dir>/features].
    #[arg(long)]
    pub features_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExtractArgs {
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Output CSV [default: <manifest dir>/features/gemlite.csv].
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Loudness target in dBFS [default: -23].
    #[arg(long, allow_hyphen_values = true)]
    pub target_rms_db: Option<f64>,
    /// Segment by energy when a recording has no alignment file.
    #[arg(long)]
    pub fallback_vad: bool,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub inputs: Inputs,
    /// Comma list of feature sets, e.g. gemlite,embedding:w2v-emo [default: gemlite].
    #[arg(long)]
    pub features: Option<String>,
    /// all|global|lambda0|lambda01, or a comma list [default: all].
    #[arg(long)]
    pub modelling: Option<String>,
    /// all|global|phrase, or a comma list [default: all].
    #[arg(long)]
    pub norm: Option<String>,
    /// Bootstrap resamples [default: 1000].
    #[arg(long)]
    pub bootstrap: Option<usize>,
    /// Output directory [default: .].
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[command(flatten)]
    pub inputs: Inputs,
    /// report.json from `evaluate`; without it the analysed cell is evaluated here.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Feature set to analyse [default: gemlite].
    #[arg(long)]
    pub features: Option<String>,
    /// Cell modelling [default: global].
    #[arg(long)]
    pub modelling: Option<String>,
    /// Cell normalisation [default: global].
    #[arg(long)]
    pub norm: Option<String>,
    /// Emotion score CSV [default: <features dir>/scores.csv when present].
    #[arg(long)]
    pub scores: Option<PathBuf>,
    /// Level of the U test: segment|subject [default: subject].
    #[arg(long)]
    pub test_level: Option<String>,
    #[arg(long)]
    pub top_k: Option<usize>,
    /// Spearman threshold for redundancy pruning [default: 0.85].
    #[arg(long)]
    pub rho_max: Option<f64>,
    /// Output directory [default: .].
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Cohort spec JSON; `--seed` replaces its seed.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[arg(long)]
    pub analysis: Option<PathBuf>,
    /// Markdown output file [default: stdout].
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match std::panic::catch_unwind(|| commands::run(cli)) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(e)) => {
            eprintln!("voicerisk: {e}");
            ExitCode::from(e.code())
        }
        Err(_) => ExitCode::from(4),
    }
}
