//! `pumpguard` command-line entry point.
//!
//! Exit codes: 0 on success, 1 for invalid configuration or data, 2 for
//! filesystem failures.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use pumpguard::config::PipelineConfig;
use pumpguard::pipeline::{Pipeline, Stage};
use pumpguard::Error;

#[derive(Debug, Parser)]
#[command(
    name = "pumpguard",
    version,
    about = "Pump condition monitoring pipeline"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// JSON configuration file; defaults apply when omitted.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Master seed, overriding the configuration.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,

    /// Output directory, overriding the configuration.
    #[arg(long, global = true, value_name = "PATH")]
    out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Command {
    /// Produce the baseline series (synthetic, or cleaned from paths.input_csv).
    Generate,
    /// Inject synthetic critical alerts into the baseline.
    Inject,
    /// Compute thresholds and label every reading.
    Label,
    /// Split the labels and train every model for every parameter.
    Train,
    /// Score the models on the held-out split.
    Evaluate,
    /// Replay the labeled series through thresholds and models as events.
    Simulate,
    /// Draw one annotated chart per parameter.
    Plot,
    /// Run generate, inject, label, train, evaluate and plot in order.
    RunAll,
}

fn load_config(cli: &Cli) -> Result<PipelineConfig, Error> {
    let mut config = match &cli.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(dir) = &cli.out_dir {
        config.paths.out_dir = dir.clone();
    }
    Ok(config)
}

fn run(cli: &Cli) -> Result<Vec<String>, Error> {
    let pipeline = Pipeline::new(load_config(cli)?)?;
    let stage = match cli.command {
        Command::Generate => Stage::Generate,
        Command::Inject => Stage::Inject,
        Command::Label => Stage::Label,
        Command::Train => Stage::Train,
        Command::Evaluate => Stage::Evaluate,
        Command::Simulate => Stage::Simulate,
        Command::Plot => Stage::Plot,
        Command::RunAll => return pipeline.run_all(),
    };
    pipeline.run(stage).map(|line| vec![line])
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(lines) => {
            for line in lines {
                println!("{line}");
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_io() { 2 } else { 1 })
        }
    }
}
