//! `prefdecomp`: synthetic preference data, reward training, information-identity checks
//! and evaluation exports.
//!
//! Exit codes: 0 success, 1 invalid input or configuration, 2 a verification
//! check failed, 3 I/O failure.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::ExperimentConfig;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("verification failed: {0}")]
    Verify(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Verify(_) => 2,
            CliError::Io(_) => 3,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "prefdecomp", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, clap::Args)]
struct Common {
    /// TOML experiment config; module defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides every seed in the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a dataset and held-out splits.
    Synth(Common),
    /// Train a reward model on a dataset.
    Train(Common),
    /// Check the information-theoretic identities on small enumerable worlds.
    Verify(Common),
    /// Accuracy, replacement gaps and a quadrant snapshot for a trained model.
    Eval(Common),
}

fn execute(cli: Cli) -> Result<(), CliError> {
    let (name, common) = match &cli.command {
        Command::Synth(c) => ("synth", c),
        Command::Train(c) => ("train", c),
        Command::Verify(c) => ("verify", c),
        Command::Eval(c) => ("eval", c),
    };
    let mut cfg = ExperimentConfig::load(common.config.as_deref())?;
    cfg.apply_seed(common.seed);
    let out = || {
        common
            .out
            .clone()
            .ok_or_else(|| CliError::Validation(format!("{name} needs --out")))
    };
    match cli.command {
        Command::Synth(_) => commands::synth(&cfg, &out()?),
        Command::Train(_) => commands::train(&cfg, &out()?),
        Command::Eval(_) => commands::eval(&cfg, &out()?),
        Command::Verify(_) => commands::verify(&cfg, common.out.as_deref()),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
