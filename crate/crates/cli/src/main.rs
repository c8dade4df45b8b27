//! Command-line runner. Exit codes: 0 success, 1 I/O, 2 configuration or
//! usage error, 3 numerical failure.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use crate::config::ExperimentConfig;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

impl From<quasiloc::Error> for CliError {
    fn from(e: quasiloc::Error) -> Self {
        match e {
            quasiloc::Error::InvalidArgument(msg) => CliError::Config(msg),
            other => CliError::Numerical(other.to_string()),
        }
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Io(_) => 1,
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }
}

#[derive(Parser)]
#[command(name = "quasiloc", version, about = "Spectra, Lyapunov exponents and duality checks for quasiperiodic lattices")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Full spectrum with FD and residual per eigenstate -> spectrum.csv
    Spectrum(Common),
    /// Lyapunov exponents and scenario per energy -> lyapunov.csv
    Lyapunov(Common),
    /// H1/H2 dual pairs and verdicts -> duality.json, duality_pairs.csv
    Duality(Common),
    /// Two-sided exponential fits against the exponents -> fits.csv
    Fit(Common),
    /// Tracked observable over Fibonacci sizes -> scaling.csv
    Scaling(Common),
}

#[derive(Args)]
struct Common {
    /// TOML config, or JSON such as the echo line of a previous output
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Worker threads for independent energies or sizes
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u16).range(1..))]
    jobs: u16,
    /// Nothing here draws random numbers; accepted for scripts that pass it
    #[arg(long)]
    seedless: bool,
    /// Override a config key, e.g. `-s g=1.5` or `-s lyapunov.steps=1000`
    #[arg(short = 's', long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let (common, command): (&Common, fn(&ExperimentConfig, &std::path::Path) -> Result<(), CliError>) = match &cli.command {
        Command::Spectrum(c) => (c, commands::spectrum),
        Command::Lyapunov(c) => (c, commands::lyapunov),
        Command::Duality(c) => (c, commands::duality),
        Command::Fit(c) => (c, commands::fit),
        Command::Scaling(c) => (c, commands::scaling),
    };
    let config = ExperimentConfig::load(common.config.as_deref(), &common.set)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(common.jobs as usize)
        .build()
        .map_err(|e| CliError::Io(std::io::Error::other(e)))?;
    pool.install(|| command(&config, &common.out))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
