//! `spinsat` command-line tool.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use crate::config::{Overrides, RunConfig};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("invalid config: {0}")]
    Config(String),
    #[error("unreachable: {0}")]
    Unreachable(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("i/o: {0}")]
    Io(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Config(_) => 2,
            CliError::Unreachable(_) => 3,
            CliError::Numerical(_) | CliError::Io(_) => 1,
        }
    }
}

#[derive(Parser)]
#[command(name = "spinsat", version, about = "Time-optimal saturation of a dissipative spin-1/2")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML run configuration
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Integration tolerance
    #[arg(long, value_name = "X")]
    tol: Option<f64>,
    /// Output directory
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Optimal schedule, replayed trajectory and summary against inversion recovery
    Synthesize {
        #[command(flatten)]
        common: Common,
        /// Maximum control amplitude
        #[arg(long, value_name = "HZ")]
        omega: Option<f64>,
    },
    /// Optimal / inversion-recovery duration ratio over amplitudes
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Amplitude to include; repeatable
        #[arg(long, value_name = "HZ", conflicts_with = "omega_range")]
        omega: Vec<f64>,
        /// Log-spaced amplitudes
        #[arg(long, value_name = "LO:HI:N")]
        omega_range: Option<String>,
    },
    /// Radial-velocity derivative over the plane, with the singular lines
    Fieldmap {
        #[command(flatten)]
        common: Common,
        /// Maximum control amplitude
        #[arg(long, value_name = "HZ")]
        omega: Option<f64>,
        /// Grid nodes per axis
        #[arg(long, value_name = "N")]
        grid: Option<usize>,
    },
    /// Switching curve traced from the horizontal singular line
    SwitchingCurve {
        #[command(flatten)]
        common: Common,
        /// Maximum control amplitude
        #[arg(long, value_name = "HZ")]
        omega: Option<f64>,
    },
    /// Limiting durations for unbounded amplitude
    Asymptote {
        #[command(flatten)]
        common: Common,
    },
}

fn load(common: &Common, omega: Option<f64>, grid: Option<usize>) -> Result<RunConfig, CliError> {
    let over = Overrides { omega_max_hz: omega, tol: common.tol, grid_n: grid, output_dir: common.out.clone() };
    RunConfig::load(&common.config, &over)
}

fn run(cli: Cli) -> Result<Vec<PathBuf>, CliError> {
    match cli.command {
        Command::Synthesize { common, omega } => commands::synthesize(&load(&common, omega, None)?),
        Command::Sweep { common, omega, omega_range } => {
            let cfg = load(&common, None, None)?;
            let omegas = match omega_range {
                Some(r) => commands::parse_range(&r)?,
                None => omega,
            };
            commands::sweep(&cfg, &omegas)
        }
        Command::Fieldmap { common, omega, grid } => commands::fieldmap(&load(&common, omega, grid)?),
        Command::SwitchingCurve { common, omega } => commands::switching_curve(&load(&common, omega, None)?),
        Command::Asymptote { common } => commands::asymptote(&load(&common, None, None)?),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(files) => {
            for f in files {
                eprintln!("wrote {}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("spinsat: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
