//! The `segflow` command line: data pipeline stages, duration prediction,
//! training, sampling and evaluation over one TOML run config.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric abort.

mod commands;
mod config;

pub use commands::{Artifact, GenerationPrompt, RunManifest};
pub use config::{apply_override, derive_seed, PipelineConfig, RunConfig, TaskConfig, TrainSection};

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error(transparent)]
    Run(#[from] Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Run(Error::NumericAbort { .. }) => EXIT_NUMERIC,
            CliError::Run(_) => EXIT_DATA,
        }
    }
}

impl From<crate::lrc::LrcError> for CliError {
    fn from(e: crate::lrc::LrcError) -> Self {
        CliError::Run(e.into())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Run(e.into())
    }
}

#[derive(Debug, Parser)]
#[command(name = "segflow", version, about = "Segment-conditioned flow matching for song latents")]
pub struct Cli {
    /// TOML run config; missing keys take their defaults.
    #[arg(long, short, global = true)]
    pub config: Option<PathBuf>,
    /// Dotted-key override such as `train.steps=500`; repeatable, applied after the file.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub overrides: Vec<String>,
    /// Shorthand for `--set run_dir=DIR`.
    #[arg(long, global = true)]
    pub run_dir: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Filter a manifest, select preference pairs or build the duration dataset.
    Pipeline(PipelineArgs),
    /// Time a lyric sheet with the heuristic duration predictor.
    PredictDurations(PredictArgs),
    /// Train a velocity model on the synthetic task.
    Train,
    /// Sample one latent from a trained checkpoint.
    Generate(GenerateArgs),
    /// Score latents against their prompts.
    Eval(EvalArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Stage {
    Pretrain,
    Finetune,
    LyricCheck,
    DpoPairs,
    DurationDataset,
}

#[derive(Debug, Args)]
pub struct PipelineArgs {
    #[arg(value_enum)]
    pub stage: Stage,
    /// JSON-lines manifest (all stages but `dpo-pairs`).
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// JSON-lines of `{"group", "id", "score"}` (for `dpo-pairs`).
    #[arg(long)]
    pub scores: Option<PathBuf>,
    /// Overrides `pipeline.dpo_min_diff`.
    #[arg(long)]
    pub min_diff: Option<f64>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    /// Generation prompt JSON with `global` and `sections`.
    #[arg(long, conflicts_with = "sheet")]
    pub prompt: Option<PathBuf>,
    /// Plain lyric sheet with `[section prompt]` header lines.
    #[arg(long, requires = "global")]
    pub sheet: Option<PathBuf>,
    /// Global description to go with `--sheet`.
    #[arg(long)]
    pub global: Option<String>,
    /// Stretch the timeline to exactly this many seconds.
    #[arg(long)]
    pub hint: Option<f64>,
    /// Output path; defaults to `<run_dir>/predicted.lrc`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Generation prompt JSON with `global`, `sections` and optional `negative`.
    #[arg(long)]
    pub prompt: PathBuf,
    /// Timed lyrics for the sections.
    #[arg(long, conflicts_with = "predict_durations")]
    pub lrc: Option<PathBuf>,
    /// Time the lyrics with the heuristic predictor instead of `--lrc`.
    #[arg(long)]
    pub predict_durations: bool,
    /// Defaults to `<run_dir>/checkpoint.json`.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Prefix of the output files.
    #[arg(long, default_value = "sample")]
    pub name: String,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Latent JSON files; repeat in the same order as `--prompt`.
    #[arg(long = "latent")]
    pub latents: Vec<PathBuf>,
    /// Prompt JSON files with timed segments (as written by `generate`).
    #[arg(long = "prompt")]
    pub prompts: Vec<PathBuf>,
    /// Predicted LRC files, paired with `--reference-lrc`, for duration error.
    #[arg(long = "predicted-lrc")]
    pub predicted: Vec<PathBuf>,
    #[arg(long = "reference-lrc")]
    pub references: Vec<PathBuf>,
    /// Worker threads; defaults to the available parallelism.
    #[arg(long)]
    pub workers: Option<usize>,
    /// Output path; defaults to `<run_dir>/report.json`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Parses `args` (including the program name), runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("segflow: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(cli: Cli) -> Result<(), CliError> {
    let mut overrides = cli.overrides;
    if let Some(dir) = cli.run_dir {
        overrides.push(format!("run_dir={}", toml::Value::String(dir.display().to_string())));
    }
    let config = RunConfig::load(cli.config.as_deref(), &overrides)?;
    match cli.command {
        Command::Pipeline(a) => commands::pipeline(&config, &a),
        Command::PredictDurations(a) => commands::predict(&config, &a),
        Command::Train => commands::train(&config),
        Command::Generate(a) => commands::generate(&config, &a),
        Command::Eval(a) => commands::eval(&config, &a),
    }
}
