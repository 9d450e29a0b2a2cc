//! `levyfun` command-line front end.
//!
//! Exit status: 0 success, 1 validation failure, 2 configuration error,
//! 3 numerical failure.

mod commands;
mod config;
mod output;

use clap::{Args, Parser, Subcommand};
use commands::Command;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

/// Thread-count override for the parallel parts (sampling, grids).
const THREADS_ENV: &str = "LEVYFUN_THREADS";

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Numerical(String),
    Io(String),
}

impl From<levyfun::Error> for CliError {
    fn from(e: levyfun::Error) -> Self {
        use levyfun::Error::*;
        match e {
            InvalidParameter { .. } | InvalidPmf(_) | InvalidTail(_) => CliError::Config(e.to_string()),
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

#[derive(Parser)]
#[command(name = "levyfun", version, about = "Densities and distribution functions of subordinator functionals")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand)]
enum Sub {
    /// Density on the output grid.
    Density(RunArgs),
    /// Distribution function on the output grid.
    Cdf(RunArgs),
    /// Laplace transform at the output grid values of `u`.
    Laplace(RunArgs),
    /// Moments of order 0 to `output.moments`.
    Moments(RunArgs),
    /// Checks the model against Monte Carlo samples and quadrature.
    Validate(RunArgs),
    /// Lattice rates, or a refinement report when `levy.epsilons` is set.
    Approx(RunArgs),
    /// Raw Monte Carlo samples.
    Sample(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// TOML configuration file.
    config: PathBuf,
    /// Override a configuration value.
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE")]
    set: Vec<String>,
    /// Write to this file instead of standard output.
    #[arg(short, long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Ok(v) = std::env::var(THREADS_ENV) {
        match v.parse::<usize>() {
            Ok(n) if n > 0 => {
                rayon::ThreadPoolBuilder::new().num_threads(n).build_global().ok();
            }
            _ => {
                eprintln!("error: {THREADS_ENV} must be a positive integer, got `{v}`");
                return ExitCode::from(2);
            }
        }
    }
    let (cmd, args) = match cli.command {
        Sub::Density(a) => (Command::Density, a),
        Sub::Cdf(a) => (Command::Cdf, a),
        Sub::Laplace(a) => (Command::Laplace, a),
        Sub::Moments(a) => (Command::Moments, a),
        Sub::Validate(a) => (Command::Validate, a),
        Sub::Approx(a) => (Command::Approx, a),
        Sub::Sample(a) => (Command::Sample, a),
    };
    match execute(cmd, &args) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            let (code, kind, msg) = match e {
                CliError::Config(m) => (2, "configuration error", m),
                CliError::Numerical(m) => (3, "numerical failure", m),
                CliError::Io(m) => (3, "output error", m),
            };
            eprintln!("{kind}: {msg}");
            ExitCode::from(code)
        }
    }
}

fn execute(cmd: Command, args: &RunArgs) -> Result<bool, CliError> {
    let runs = config::load(&args.config, &args.set)?;
    let sweep_name = runs[0].1.output.sweep.as_ref().map(|s| s.key.rsplit('.').next().unwrap().to_string());
    let (text, pass) = commands::run(cmd, &runs, sweep_name.as_deref())?;
    let io = |e: std::io::Error| CliError::Io(e.to_string());
    match &args.out {
        Some(path) => std::fs::write(path, text).map_err(io)?,
        None => std::io::stdout().lock().write_all(text.as_bytes()).map_err(io)?,
    }
    Ok(pass)
}
