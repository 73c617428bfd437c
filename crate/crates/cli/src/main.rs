//! `sulp`: estimate SU-LP models, simulate VARMA data, run Monte Carlo
//! studies, reweight stored chains and export draws.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use sulp_core::SulpError;

#[derive(Parser)]
#[command(name = "sulp", version, about = "Bayesian seemingly unrelated local projections")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
pub struct Common {
    /// TOML run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides the seed in the configuration.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides `[output].dir`.
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
    /// Worker threads for Monte Carlo replications (0 = all cores).
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the sampler on a data file and write IRF summaries and the chain.
    Estimate(Common),
    /// Simulate a data set from a VARMA calibration together with its true IRF.
    Simulate(Common),
    /// Run a Monte Carlo coverage study.
    Montecarlo(Common),
    /// Power-posterior summaries of a stored chain over a grid of learning rates.
    Reweight {
        #[command(flatten)]
        common: Common,
        /// Chain manifest; overrides `[reweight].chain`.
        #[arg(long)]
        chain: Option<PathBuf>,
        /// Comma-separated learning rates; overrides `[reweight].c`.
        #[arg(long, value_delimiter = ',')]
        c: Option<Vec<f64>>,
    },
    /// Export per-draw β and IRF summaries from a stored chain.
    Export {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        chain: Option<PathBuf>,
    },
}

/// Failure classes with their exit codes.
#[derive(Debug)]
pub enum CliError {
    /// Unreadable or invalid configuration and inputs (exit 2).
    Config(String),
    /// Numerical breakdown during estimation (exit 3).
    Numerical(SulpError),
    /// Monte Carlo finished but some cell exceeded the failure threshold (exit 4).
    PartialFailure(String),
}

impl From<SulpError> for CliError {
    fn from(e: SulpError) -> Self {
        if e.is_numerical() {
            CliError::Numerical(e)
        } else {
            CliError::Config(e.to_string())
        }
    }
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::PartialFailure(_) => 4,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Numerical(e) => write!(f, "numerical failure: {e}"),
            CliError::PartialFailure(m) => write!(f, "partial Monte Carlo failure: {m}"),
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let res = match cli.command {
        Command::Estimate(c) => commands::estimate(&c),
        Command::Simulate(c) => commands::simulate(&c),
        Command::Montecarlo(c) => commands::montecarlo(&c),
        Command::Reweight { common, chain, c } => commands::reweight(&common, chain, c),
        Command::Export { common, chain } => commands::export(&common, chain),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("sulp: {e}");
            ExitCode::from(e.code())
        }
    }
}
