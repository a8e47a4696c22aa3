//! Command-line front end: negative data augmentation, theorem
//! verification, stream simulation, hyperparameter sweeps, and synthetic
//! world management.
//!
//! Exit codes: 0 success (and, for verify-theorem, all cells passing),
//! 1 internal failure or verification failure, 2 usage or precondition
//! errors. `PANDA_THREADS` caps sampling workers; worker count never
//! changes outputs.

mod commands;
mod manifest;

use clap::{Parser, Subcommand};
use panda_core::error::Error;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "panda",
    version,
    about = "Batch-shared negative augmentation, feature debiasing, and test-time adaptation toolkit"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Recompose negative augmentations from a batch of images
    Nda(commands::nda::NdaArgs),
    /// Check Monte Carlo accuracy against the closed-form grid
    VerifyTheorem(commands::verify_theorem::VerifyArgs),
    /// Run a chunked adaptation stream and write reports
    Simulate(commands::simulate::SimulateArgs),
    /// Sweep offset ratio and M:B ratio grids
    Sweep(commands::sweep::SweepArgs),
    /// Build a synthetic world directory
    WorldMake(commands::world_cmd::WorldMakeArgs),
    /// Print a summary of a world directory
    WorldInspect(commands::world_cmd::WorldInspectArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Nda(args) => commands::nda::run(args).map(|()| true),
        Command::VerifyTheorem(args) => commands::verify_theorem::run(args),
        Command::Simulate(args) => commands::simulate::run(args).map(|()| true),
        Command::Sweep(args) => commands::sweep::run(args).map(|()| true),
        Command::WorldMake(args) => commands::world_cmd::run_make(args).map(|()| true),
        Command::WorldInspect(args) => commands::world_cmd::run_inspect(args).map(|()| true),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Io(_) => ExitCode::from(1),
                _ => ExitCode::from(2),
            }
        }
    }
}
