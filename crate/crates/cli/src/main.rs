//! `nfpe <command> --config run.toml`
//!
//! Exit codes: 0 success, 1 a check failed, 2 usage or configuration error,
//! 3 numerical failure.

mod commands;
mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use thiserror::Error;

use crate::config::RunConfig;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] nfpe::Error),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        use nfpe::Error as E;
        match self {
            CliError::Usage(_) | CliError::Config(_) => 2,
            CliError::Core(E::Config(_) | E::Domain(_) | E::Parse { .. } | E::GridMismatch(_)) => 2,
            CliError::Core(_) | CliError::Io(_) => 3,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "nfpe", version, about = "Nonlinear Fokker-Planck solver, equilibria and particle cross-checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Sample the structural hypotheses on the coefficients and potential.
    VerifyHypotheses(Args),
    /// Tabulate the confining potential and certify it.
    BuildPotential(Args),
    /// Implicit-Euler run with diagnostics and the free-energy report.
    Evolve(Args),
    /// Stationary state of a given mass, optionally with a convergence run.
    Equilibrium(Args),
    /// McKean-Vlasov particle simulation.
    Particles(Args),
}

#[derive(Debug, clap::Args)]
struct Args {
    #[arg(long)]
    config: PathBuf,
}

/// Creates the run directory (which must not exist yet) and copies the config into it.
fn prepare_output(cfg: &RunConfig, config_path: &Path) -> Result<PathBuf, CliError> {
    let dir = cfg.output_dir();
    if let Some(parent) = dir.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::create_dir(&dir).map_err(|e| match e.kind() {
        std::io::ErrorKind::AlreadyExists => CliError::Usage(format!("output directory {} already exists", dir.display())),
        _ => CliError::Io(e),
    })?;
    std::fs::copy(config_path, dir.join("config.toml"))?;
    Ok(dir)
}

fn run(cli: Cli) -> Result<commands::Outcome, CliError> {
    let (Command::VerifyHypotheses(a) | Command::BuildPotential(a) | Command::Evolve(a) | Command::Equilibrium(a) | Command::Particles(a)) = &cli.command;
    let cfg = RunConfig::load(&a.config)?;
    if cfg.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.threads)
            .build_global()
            .map_err(|e| CliError::Config(format!("cannot set thread count: {e}")))?;
    }
    // Check command-specific sections before touching the filesystem.
    match &cli.command {
        Command::Evolve(_) => {
            cfg.require_run()?;
            cfg.require_initial()?;
        }
        Command::Particles(_) => {
            cfg.require_initial()?;
        }
        _ => {}
    }
    let out = prepare_output(&cfg, &a.config)?;
    match cli.command {
        Command::VerifyHypotheses(_) => commands::verify_hypotheses(&cfg, &out),
        Command::BuildPotential(_) => commands::build_potential(&cfg, &out),
        Command::Evolve(_) => commands::evolve_cmd(&cfg, &out),
        Command::Equilibrium(_) => commands::equilibrium_cmd(&cfg, &out),
        Command::Particles(_) => commands::particles_cmd(&cfg, &out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(o) => {
            println!("{} {}", if o.passed { "PASS" } else { "FAIL" }, o.summary);
            ExitCode::from(if o.passed { 0 } else { 1 })
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
