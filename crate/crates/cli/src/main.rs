//! Command-line driver for the vortex-metric solvers.
//!
//! Every subcommand reads one TOML configuration (`--config`), writes its
//! artifacts into one output directory, and prints a JSON summary that
//! embeds the fully resolved configuration. Exit codes: 0 success, 2
//! configuration error, 3 solver failure, 4 failed identity check, 5 I/O
//! or format error.

mod commands;
mod config;

use clap::{Parser, Subcommand};
use std::path::PathBuf;

/// Solvers and reports for abelian vortex metrics on the round sphere.
#[derive(Parser)]
#[command(name = "eb", version, disable_help_subcommand = true)]
pub struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,

    /// Output directory; overrides EB_OUTPUT_DIR and the configuration.
    #[arg(long, global = true, value_name = "DIR")]
    pub output: Option<PathBuf>,

    /// Reuse checkpoints from earlier runs where they exist.
    #[arg(long, global = true)]
    pub resume: bool,

    /// Worker threads; changes speed, never results.
    #[arg(long, global = true, value_name = "N")]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Clone, Copy)]
pub enum Command {
    /// Solve the scalar equation at one coupling and write a checkpoint.
    SolvePde,
    /// Walk the solution branch through a descending coupling schedule.
    MaximalBranch,
    /// Continue a checkpointed solution through a volume schedule.
    ContinueVolume,
    /// Shoot the rotationally symmetric two-pole profiles for a b schedule.
    SolveSymmetric,
    /// Solve the cylinder-end profile and anchor it at a prescribed depth.
    SolveCylindrical,
    /// Shoot the conical planar profile and report its geometry.
    SolveChmy,
    /// Tabulate the small-coupling family against its dissolving limit.
    ReportDissolving,
    /// Tabulate large-volume certificates along the maximal branch.
    ReportLargeVolume,
    /// Recompute every diagnostic certificate for a checkpoint.
    Diagnose,
}

fn main() {
    let cli = Cli::parse();
    if let Err(err) = commands::run(cli) {
        eprintln!("error: {err}");
        std::process::exit(err.exit_code());
    }
}
