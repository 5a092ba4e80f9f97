//! `swave`: config-driven experiments on observability and controllability of
//! stochastic wave equations. Flags only pick the command and the config file.

mod commands;
mod output;

use clap::{Parser, Subcommand};
use commands::{Failure, Run, EXIT_CONFIG};
use std::path::PathBuf;
use std::process::ExitCode;
use swave_core::config::ExperimentConfig;

/// Overrides `mc.workers`.
const WORKERS_ENV: &str = "SWAVE_WORKERS";

#[derive(Parser)]
#[command(name = "swave", version, about = "Observability and controllability experiments for stochastic wave equations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Waiting time, observed faces and weight parameters
    Geometry { config: PathBuf },
    /// Identity convergence, positivity checks and both sides of the weighted estimate
    CarlemanVerify { config: PathBuf },
    /// Worst observability ratio over a data family for each horizon
    Observability { config: PathBuf },
    /// Drives the initial data to the target with HUM controls
    Control { config: PathBuf },
    /// Two-sided energy band of the backward solution
    EnergyCheck { config: PathBuf },
}

fn workers(cfg: &ExperimentConfig) -> Result<Option<usize>, Failure> {
    match std::env::var(WORKERS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(Failure::config(format!("{WORKERS_ENV} must be a positive integer, got `{v}`"))),
        },
        Err(_) => Ok(cfg.mc.workers),
    }
}

impl Command {
    fn config(&self) -> &PathBuf {
        match self {
            Command::Geometry { config }
            | Command::CarlemanVerify { config }
            | Command::Observability { config }
            | Command::Control { config }
            | Command::EnergyCheck { config } => config,
        }
    }
}

fn execute(cli: Cli) -> Result<(), Failure> {
    let command = cli.command;
    let cfg = ExperimentConfig::load(command.config()).map_err(Failure::config)?;
    if let Some(n) = workers(&cfg)? {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| Failure::config(e.to_string()))?;
    }
    let run = Run::new(cfg);
    println!("# config_hash={}, seed={}", run.stamp.hash, run.stamp.seed);
    match &command {
        Command::Geometry { .. } => commands::geometry(&run),
        Command::CarlemanVerify { .. } => commands::carleman_verify(&run),
        Command::Observability { .. } => commands::observability(&run),
        Command::Control { .. } => commands::control(&run),
        Command::EnergyCheck { .. } => commands::energy(&run),
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(if f.code == 0 { EXIT_CONFIG } else { f.code })
        }
    }
}
