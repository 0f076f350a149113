//! `cpp-lab`: exact oracles, Monte Carlo runs and invariant checks for the
//! Potts lattice Higgs model and its coupled plaquette percolation.

mod config;
mod tasks;

use std::process::ExitCode;

use clap::{Parser, Subcommand};
use cpp_core::Error;

use config::Opts;

#[derive(Parser, Debug)]
#[command(name = "cpp-lab", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Exact distribution of μ, ρ or κ as CSV (id, num, den)
    Enumerate(Opts),
    /// Monte Carlo run of the coupled sampler
    Sample(Opts),
    /// Both sides of E[W_γ] = ρ(V_γ) for a square loop
    Wilson(Opts),
    /// Finite-n Marcu–Fredenhagen ratio scan
    MfRatio(Opts),
    /// Torus duality check
    DualityCheck(Opts),
    /// Quick invariant suite
    Selftest(Opts),
    /// Minimal area of a square loop in a box
    MinArea(Opts),
    /// Run the task named in a config file or manifest
    Run(Opts),
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.chain().find_map(|e| e.downcast_ref::<Error>()) {
        Some(Error::TooLarge { .. } | Error::BudgetExceeded { .. }) => 3,
        Some(_) => 2,
        None => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (task, opts) = match cli.command {
        Command::Enumerate(o) => ("enumerate", o),
        Command::Sample(o) => ("sample", o),
        Command::Wilson(o) => ("wilson", o),
        Command::MfRatio(o) => ("mf-ratio", o),
        Command::DualityCheck(o) => ("duality-check", o),
        Command::Selftest(o) => ("selftest", o),
        Command::MinArea(o) => ("min-area", o),
        Command::Run(o) => ("run", o),
    };
    match tasks::dispatch(task, opts) {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
