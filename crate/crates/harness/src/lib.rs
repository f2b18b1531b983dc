//! Command-line harness: flat configs, experiment presets and deterministic
//! reports.

pub mod commands;
pub mod config;
pub mod error;
pub mod report;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use commands::{Outcome, RunOptions};
pub use config::RawConfig;
pub use error::{HarnessError, Result};
pub use report::Format;
use sembind::Execution;

#[derive(Debug, Parser)]
#[command(name = "sembind", version, about = "Semantic binding experiments on synthetic latents")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Config file or preset name (t3-imprint, t4-reprompt, t5-robust, t7-metrics).
    #[arg(long, global = true)]
    pub config: Option<String>,

    /// Overrides the config seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    #[arg(long, global = true, default_value = "out")]
    pub out_dir: PathBuf,

    /// Overrides the config trial count.
    #[arg(long, global = true)]
    pub trials: Option<usize>,

    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    pub format: Format,

    /// Runs trials on one thread.
    #[arg(long, global = true)]
    pub sequential: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Two-stage training of the desk-scale hashing network.
    TrainMasker,
    /// Code-space metrics of the semantic oracle.
    Metrics,
    /// Channel strengths matching the base-GS distortion accuracies.
    Calibrate,
    /// Normality battery over watermarked latent generators.
    Undetectability,
    /// Benign grid over distortion channels.
    Robustness,
    /// Imprint or reprompt forgery grid.
    Forge,
    /// Mask-ratio sweep of clean accuracy and forged acceptance.
    SweepSigma,
    /// Quick consistency checks across modules.
    Selftest,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::TrainMasker => "train-masker",
            Command::Metrics => "metrics",
            Command::Calibrate => "calibrate",
            Command::Undetectability => "undetectability",
            Command::Robustness => "robustness",
            Command::Forge => "forge",
            Command::SweepSigma => "sweep-sigma",
            Command::Selftest => "selftest",
        }
    }
}

/// Loads the config named by `--config` (empty when absent) and applies the
/// `--seed` and `--trials` overrides, which then appear in the config echo.
pub fn effective_config(cli: &Cli) -> Result<RawConfig> {
    let mut raw = match &cli.config {
        Some(spec) => RawConfig::load(spec)?,
        None => RawConfig::default(),
    };
    if let Some(seed) = cli.seed {
        raw.set("seed", seed);
    }
    if let Some(trials) = cli.trials {
        raw.set("trials", trials);
    }
    Ok(raw)
}

pub fn run(cli: &Cli) -> Result<Outcome> {
    let opts = RunOptions {
        out_dir: cli.out_dir.clone(),
        format: cli.format,
        exec: if cli.sequential {
            Execution::Sequential
        } else {
            Execution::default()
        },
    };
    if cli.command == Command::Selftest {
        return commands::selftest_command();
    }
    let raw = effective_config(cli)?;
    match cli.command {
        Command::TrainMasker => commands::train_masker_command(&raw, &opts),
        Command::Metrics => commands::metrics_command(&raw, &opts),
        Command::Calibrate => commands::calibrate_command(&raw, &opts),
        Command::Undetectability => commands::undetectability_command(&raw, &opts),
        Command::Robustness => commands::grid_command("robustness", &raw, &commands::ROBUSTNESS, &opts),
        Command::Forge => commands::grid_command("forge", &raw, &commands::FORGE, &opts),
        Command::SweepSigma => commands::sweep_command(&raw, &opts),
        Command::Selftest => unreachable!("handled above"),
    }
}
