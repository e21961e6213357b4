//! Command-line front end: `generate | train | eval | experiment | predict`,
//! each driven by one TOML config file.

pub mod commands;
pub mod config;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use commands::{build_task, cmd_eval, cmd_experiment, cmd_generate, cmd_predict, cmd_train, fit_seed, Fitted, Task};
pub use config::{ExperimentConfig, Generator, Method};

use crate::error::{Error, Result};

#[derive(Debug, Parser)]
#[command(name = "implicit-modal", version, about = "Modal regression by implicit function learning")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write train/test CSVs and a manifest per seed.
    Generate(RunArgs),
    /// Train one model per seed; write model files and learning curves.
    Train(RunArgs),
    /// Score saved models on their test sets.
    Eval(RunArgs),
    /// Train and evaluate every seed; write curves and a mean/stderr summary.
    Experiment(RunArgs),
    /// Export mode sets over an input grid from the first seed's model.
    Predict(RunArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// TOML config file.
    pub config: PathBuf,
    /// Replace one config value, e.g. `--override train.steps=5000`.
    #[arg(long = "override", value_name = "SECTION.KEY=VALUE")]
    pub overrides: Vec<String>,
}

impl Command {
    fn args(&self) -> &RunArgs {
        match self {
            Command::Generate(a)
            | Command::Train(a)
            | Command::Eval(a)
            | Command::Experiment(a)
            | Command::Predict(a) => a,
        }
    }
}

pub fn load_config(args: &RunArgs) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(&args.config).map_err(|e| Error::io(&args.config, e))?;
    ExperimentConfig::parse(&text, &args.overrides)
}

/// Runs a subcommand and returns the paths it wrote.
pub fn run(command: &Command) -> Result<Vec<PathBuf>> {
    let cfg = load_config(command.args())?;
    log::info!("config hash {}", cfg.hash_hex());
    match command {
        Command::Generate(_) => cmd_generate(&cfg),
        Command::Train(_) => cmd_train(&cfg),
        Command::Eval(_) => cmd_eval(&cfg),
        Command::Experiment(_) => cmd_experiment(&cfg),
        Command::Predict(_) => cmd_predict(&cfg),
    }
}

/// 2: invalid configuration or data; 3: divergence; 4: I/O or file format.
pub fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Diverged { .. } => 3,
        Error::Io { .. } | Error::Csv(_) | Error::Json(_) | Error::Format(_) => 4,
        _ => 2,
    }
}
