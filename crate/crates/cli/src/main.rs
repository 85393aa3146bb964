//! `bft`: batch driver for the bft-core toolkit.
//!
//! Every subcommand writes its tables and snapshots into `--out` together
//! with a `manifest.json`. Exit status is 0 when every check passes, 1 when
//! a named check fails or a solver gives up, 2 for malformed input.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use bft_core::BftError;
use clap::{Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "bft", version, about = "Pseudo-spectral Hamiltonian toolkit for the nonlinear Laplace equation on T³")]
struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,

    /// Output directory.
    #[arg(long, global = true, default_value = "results")]
    out: PathBuf,

    /// Also write whitespace-separated `.dat` copies of every table.
    #[arg(long, global = true)]
    plotdata: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Clifford generator identities and matrix dumps.
    Algebra(commands::algebra::AlgebraArgs),
    /// Nullity table of the principal symbol of J or K.
    Symbol(commands::algebra::SymbolArgs),
    /// Gradient, Hessian and operator identity suites on random fields.
    Check(commands::check::CheckArgs),
    /// Deflated search for periodic solutions with the Laplace and L² reports.
    Solve(commands::ConfigArgs),
    /// Compare the searches with and without the cutoff Hamiltonian.
    Cutoff(commands::solve::CutoffArgs),
    /// Parabolic Morse flow from the configured initial state.
    MorseFlow(commands::ConfigArgs),
    /// Slow-manifold residual of the ε-deformed flow.
    Adiabatic(commands::flow::AdiabaticArgs),
    /// Space-time Floer curve between two snapshots.
    Floer(commands::floer::FloerArgs),
}

/// Errors that end a run before its checks are evaluated.
#[derive(Debug)]
pub enum Failure {
    /// Malformed configuration or arguments.
    Input(String),
    /// Solver or I/O failure during the run.
    Runtime(String),
}

impl From<BftError> for Failure {
    fn from(e: BftError) -> Self {
        match e {
            BftError::Config(_) | BftError::InvalidArgument(_) => Failure::Input(e.to_string()),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

pub struct Global {
    pub out: PathBuf,
    pub plotdata: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(jobs) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build_global() {
            eprintln!("error: cannot size the worker pool: {e}");
            return ExitCode::from(1);
        }
    }
    let global = Global { out: cli.out, plotdata: cli.plotdata };
    let outcome = match &cli.command {
        Command::Algebra(a) => commands::algebra::run_algebra(&global, a),
        Command::Symbol(a) => commands::algebra::run_symbol(&global, a),
        Command::Check(a) => commands::check::run(&global, a),
        Command::Solve(a) => commands::solve::run_solve(&global, a),
        Command::Cutoff(a) => commands::solve::run_cutoff(&global, a),
        Command::MorseFlow(a) => commands::flow::run_morse(&global, a),
        Command::Adiabatic(a) => commands::flow::run_adiabatic(&global, a),
        Command::Floer(a) => commands::floer::run(&global, a),
    };
    match outcome {
        Ok(checks) => {
            for c in &checks {
                println!("{} {}: {}", if c.pass { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            let failed: Vec<&str> = checks.iter().filter(|c| !c.pass).map(|c| c.name.as_str()).collect();
            if failed.is_empty() {
                ExitCode::SUCCESS
            } else {
                eprintln!("assertion failed: {}", failed.join(", "));
                ExitCode::from(1)
            }
        }
        Err(Failure::Input(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
