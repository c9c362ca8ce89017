//! `spancal`: the boundary-calibration pipeline from wiki pages to
//! evaluation reports. Every stage writes JSON to stdout or `--out` and logs
//! to stderr (`SPANCAL_LOG` sets the level).

mod config;
mod data;
mod eval;
mod io;
mod model;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use spancal_model::ModelError;

use crate::config::PipelineConfig;

/// An argument that parsed but makes no sense; exits with status 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

#[derive(Parser, Debug)]
#[command(name = "spancal", version, about = "Two-pass span boundary calibration pipeline")]
struct Cli {
    /// Pipeline config (TOML); command-line flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output file (stdout when omitted).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Mine anchor-text passages from wiki pages (or generate synthetic ones).
    Ingest(data::IngestArgs),
    /// Garble anchors into noisy calibration records.
    Synth(data::SynthArgs),
    /// Pair first-pass predictions with gold entities.
    Pairs(data::PairsArgs),
    /// Build continual multilingual stage manifests.
    Schedule(data::ScheduleArgs),
    /// Boundary-recovery pre-training of the calibrator.
    Pretrain(model::TrainFlags),
    /// Fine-tune the calibrator, or train the base tagger.
    Finetune(model::FinetuneArgs),
    /// Calibrate records, or tag sentences with a base tagger.
    Predict(model::PredictArgs),
    /// Score predictions against gold.
    Eval(eval::EvalArgs),
    /// Mine, garble and profile the injected boundary errors in one go.
    Analyze(data::AnalyzeArgs),
}

fn run(cli: &Cli) -> anyhow::Result<()> {
    let cfg = PipelineConfig::load(cli.config.as_deref())?;
    let out = cli.out.as_deref();
    match &cli.command {
        Command::Ingest(a) => data::ingest(a, &cfg, out),
        Command::Synth(a) => data::synth(a, &cfg, out),
        Command::Pairs(a) => data::pairs(a, &cfg, out),
        Command::Schedule(a) => data::schedule(a, &cfg, out),
        Command::Pretrain(a) => model::pretrain(a, &cfg, out),
        Command::Finetune(a) => model::finetune(a, &cfg, out),
        Command::Predict(a) => model::predict(a, &cfg, out),
        Command::Eval(a) => eval::eval(a, &cfg, out),
        Command::Analyze(a) => data::analyze(a, &cfg, out),
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<UsageError>().is_some() {
        return 2;
    }
    match err.downcast_ref::<ModelError>() {
        Some(ModelError::Diverged { .. }) => 3,
        Some(ModelError::Config(_) | ModelError::Weight { .. }) => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("SPANCAL_LOG", "info")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
