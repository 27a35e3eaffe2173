//! `qcavity`: cavity kernels, fixed points and self checks from the shell.
//!
//! Exit codes: 0 success, 2 configuration error, 3 domain error (no fixed
//! point, positivity bound, undefined band), 4 numerical failure.

mod commands;
mod config;
mod output;

use std::process::ExitCode;

use clap::{Parser, Subcommand};
use qcavity::ErrorKind;

use commands::KernelMethod;
use config::{Overrides, RunConfig};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] qcavity::Error),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Failed(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Io(_) => 2,
            CliError::Core(e) => match e.kind() {
                ErrorKind::Config => 2,
                ErrorKind::Domain => 3,
                ErrorKind::Numerical => 4,
            },
            CliError::Failed(_) => 4,
        }
    }

    fn code(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Core(e) => e.code(),
            CliError::Io(_) => "io",
            CliError::Failed(_) => "check-failed",
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "qcavity", version, about = "Cavity method for harmonic networks on trees")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Existence of the uniform fixed point over the lambda grid.
    Phase,
    /// Closed form against iteration of the uniform map.
    FixedPoint,
    /// Time-domain kernel k(tau) of the uniform fixed point.
    Kernel {
        #[arg(long, value_enum, default_value = "branch-cut")]
        method: KernelMethod,
    },
    /// Spectral density J(omega).
    Spectrum,
    /// Fourier kernel and real multiplier A(nu).
    Multiplier,
    /// Convergence of the root message with tree depth.
    Tree,
    /// Finite-time response and Feynman-Vernon kernels.
    FiniteTime,
    /// Population dynamics around the fixed point.
    Population,
    /// Orbit of the uniform map from x0.
    Orbit,
    /// Run the built-in acceptance checks.
    Check {
        /// Comma-separated criterion ids (default: all).
        #[arg(long, value_delimiter = ',')]
        only: Vec<u32>,
    },
}

fn run(cli: &Cli) -> Result<(), CliError> {
    if let Command::Check { only } = &cli.command {
        return commands::check(only);
    }
    let cfg = RunConfig::resolve(&cli.overrides)?;
    let table = match &cli.command {
        Command::Phase => commands::phase(&cfg)?,
        Command::FixedPoint => commands::fixed_point(&cfg)?,
        Command::Kernel { method } => commands::kernel(&cfg, *method)?,
        Command::Spectrum => commands::spectrum(&cfg)?,
        Command::Multiplier => commands::multiplier(&cfg)?,
        Command::Tree => commands::tree(&cfg)?,
        Command::FiniteTime => commands::finite_time(&cfg)?,
        Command::Population => commands::population(&cfg)?,
        Command::Orbit => commands::orbit(&cfg)?,
        Command::Check { .. } => unreachable!(),
    };
    table.emit(&cfg)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: code={} {e}", e.code());
            ExitCode::from(e.exit_code())
        }
    }
}
