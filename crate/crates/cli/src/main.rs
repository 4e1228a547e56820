//! Command-line front end: scenario planning, closed-loop simulation,
//! directional-weight demos, and fixture sweeps.
//!
//! Exit codes: 0 success, 2 configuration or parse error, 3 collision
//! violation, 4 singularity, 5 numerical failure.

// `!(x > 0.0)` deliberately rejects NaN flag values together with
// non-positive ones.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use flatform_core::Error;

#[derive(Parser)]
#[command(
    name = "flatform",
    version,
    about = "Finite-horizon formation trajectory planning and collision-free tracking for quadrotor teams"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Plan the optimal formation trajectory and write its samples.
    Plan(RunArgs),
    /// Track the planned trajectory in closed loop and write the trace.
    Track(RunArgs),
    /// Track and additionally recover physical quadrotor commands.
    Simulate(RunArgs),
    /// Replay the two-vehicle directional-weight scenarios.
    WeightsDemo(DemoArgs),
    /// Simulate every bundled fixture under the basic and unified
    /// strategies; FLATFORM_THREADS caps parallelism.
    Sweep(SweepArgs),
}

#[derive(Args, Clone)]
struct RunArgs {
    /// Path to a scenario TOML file.
    #[arg(long, conflicts_with = "fixture")]
    config: Option<PathBuf>,
    /// Name of a bundled scenario: four_uav, seven_uav, seven_uav_feasible.
    #[arg(long)]
    fixture: Option<String>,
    /// Output directory (created if missing).
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Override the avoidance strategy: none|basic|forward|approach|unified.
    #[arg(long)]
    strategy: Option<String>,
    /// Override the simulation step in seconds.
    #[arg(long)]
    dt: Option<f64>,
    /// Override the horizon in seconds.
    #[arg(long)]
    t_f: Option<f64>,
    /// Override the output sampling stride.
    #[arg(long)]
    stride: Option<usize>,
    /// Feedback law variant: consistent|literal-eq19.
    #[arg(long)]
    variant: Option<String>,
}

#[derive(Args, Clone)]
struct DemoArgs {
    /// Output directory (created if missing).
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Time step between the 20 demo samples in seconds.
    #[arg(long, default_value_t = 0.15)]
    dt: f64,
}

#[derive(Args, Clone)]
struct SweepArgs {
    /// Output directory; each run writes to OUT/FIXTURE/STRATEGY/.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Plan(args) => commands::plan(&args),
        Command::Track(args) => commands::track(&args, false),
        Command::Simulate(args) => commands::track(&args, true),
        Command::WeightsDemo(args) => commands::weights_demo(&args),
        Command::Sweep(args) => commands::sweep(&args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &commands::CliError) -> u8 {
    match e {
        commands::CliError::Io(_) => 5,
        commands::CliError::Core(core) => match core {
            Error::Config(_)
            | Error::InvalidGraph(_)
            | Error::InvalidWeight(_) => 2,
            Error::CollisionViolation { .. } => 3,
            Error::Singularity { .. }
            | Error::FlatnessSingular { .. }
            | Error::AttitudeSingular => 4,
            Error::InvalidMatrix(_)
            | Error::PlannerSingular { .. }
            | Error::RiccatiDivergence { .. }
            | Error::OutsideHorizon { .. }
            | Error::Numerical(_) => 5,
        },
    }
}
