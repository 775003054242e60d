//! `rkvi`: step, simulate, study convergence of, and diagnose the
//! constrained variational integrators from the command line.

mod commands;
mod config;

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use thiserror::Error;

use config::{RunConfig, Settings};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error in `{key}`: {message}")]
    Config { key: &'static str, message: String },

    #[error("configuration file {}: {message}", path.display())]
    ConfigFile { path: PathBuf, message: String },

    #[error(transparent)]
    Solver(#[from] rk_variational::Error),

    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },

    #[error("write failed: {0}")]
    Write(#[from] io::Error),

    #[error("write failed: {0}")]
    Csv(#[from] csv::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config { .. } | CliError::ConfigFile { .. } => 2,
            CliError::Solver(rk_variational::Error::InvalidConfig(_)) => 2,
            CliError::Solver(_) => 3,
            CliError::Io { .. } | CliError::Write(_) | CliError::Csv(_) => 4,
        }
    }
}

#[derive(Parser)]
#[command(name = "rkvi", version, about = "Variational integrators for constrained mechanics, built from Runge–Kutta methods")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Take one step from the problem's default state and print it as TOML
    Step(Settings),
    /// Write a CSV trajectory
    Simulate(Settings),
    /// Measure the global error against a fine reference over a list of step sizes
    Converge(Settings),
    /// Run the structural checks and report measured values against thresholds
    Diagnose(Settings),
}

fn open_output(config: &RunConfig) -> Result<Box<dyn Write>, CliError> {
    Ok(match &config.out {
        Some(path) => Box::new(BufWriter::new(File::create(path).map_err(|source| CliError::Io {
            path: path.clone(),
            source,
        })?)),
        None => Box::new(io::stdout().lock()),
    })
}

fn run(cli: Cli) -> Result<ExitCode, CliError> {
    let (command, settings) = match cli.command {
        Command::Step(s) => ("step", s),
        Command::Simulate(s) => ("simulate", s),
        Command::Converge(s) => ("converge", s),
        Command::Diagnose(s) => ("diagnose", s),
    };
    let config = RunConfig::load(settings)?;
    let mut out = open_output(&config)?;
    let code = match command {
        "step" => {
            commands::step(&config, &mut out)?;
            ExitCode::SUCCESS
        }
        "simulate" => {
            commands::simulate(&config, &mut out)?;
            ExitCode::SUCCESS
        }
        "converge" => {
            let slope = commands::converge(&config, &mut out)?;
            eprintln!("fitted slope {slope:.3}");
            ExitCode::SUCCESS
        }
        _ => {
            if commands::diagnose(&config, &mut out)? {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
    };
    out.flush()?;
    Ok(code)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("rkvi: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
