mod commands;
mod spec;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use swarmvis::experiments::DEFAULT_MAX_ROUNDS;

use crate::spec::WidthBound;

/// Mutual visibility for fat robots with slim omnidirectional cameras.
#[derive(Parser)]
#[command(name = "swarmvis", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one simulation from a spec file.
    Simulate(SimulateArgs),
    /// Run a spec's deployment under seeds seed+0 .. seed+N-1 and write CSV rows.
    Batch(BatchArgs),
    /// Cross-check the analytic visibility oracle against the sampled one.
    VerifyVisibility(VerifyArgs),
    /// Write a random deployment as a spec file.
    Generate(GenerateArgs),
    /// Draw one round of a trace as SVG.
    Render(RenderArgs),
}

#[derive(Args)]
struct RunFlags {
    /// Stop a run that has not finished after this many rounds.
    #[arg(long, default_value_t = DEFAULT_MAX_ROUNDS)]
    max_rounds: u64,
    /// Where the width bound D comes from.
    #[arg(long, value_enum, default_value_t = WidthBound::Auto)]
    width_bound: WidthBound,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    spec: PathBuf,
    /// Trace output, one JSON record per line.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Metrics output (JSON).
    #[arg(long)]
    metrics: Option<PathBuf>,
    /// Write an SVG snapshot every K rounds.
    #[arg(long, value_name = "K", requires = "svg_dir", value_parser = clap::value_parser!(u64).range(1..))]
    svg_every: Option<u64>,
    #[arg(long, requires = "svg_every")]
    svg_dir: Option<PathBuf>,
    #[command(flatten)]
    run: RunFlags,
}

#[derive(Args)]
struct BatchArgs {
    #[arg(long)]
    spec: PathBuf,
    #[arg(long)]
    runs: u64,
    /// CSV output; standard output if absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Per-metric statistics (JSON).
    #[arg(long)]
    summary: Option<PathBuf>,
    #[command(flatten)]
    run: RunFlags,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long, default_value_t = 1000)]
    trials: u64,
    #[arg(long, default_value_t = 3)]
    robots_min: usize,
    #[arg(long, default_value_t = 10)]
    robots_max: usize,
    /// Samples per boundary for the sampled oracle.
    #[arg(long, default_value_t = 256)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Full report with every disagreement (JSON).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Check every pair of one configuration ({camera_radius, centers}) instead.
    #[arg(long, conflicts_with = "trials")]
    fixture: Option<PathBuf>,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long)]
    n: usize,
    #[arg(long, requires = "height", conflicts_with = "density")]
    width: Option<f64>,
    #[arg(long, requires = "width")]
    height: Option<f64>,
    /// Robots per square unit; the rectangle follows from `--aspect`.
    #[arg(long, required_unless_present = "width")]
    density: Option<f64>,
    /// Width over height, used with `--density`.
    #[arg(long, default_value_t = 1.0, conflicts_with = "width")]
    aspect: f64,
    #[arg(long, default_value_t = 0.5)]
    c: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RenderArgs {
    #[arg(long)]
    trace: PathBuf,
    /// Round to draw; the last one if absent.
    #[arg(long)]
    round: Option<u64>,
    /// SVG output; standard output if absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// A command that ran to the end, with or without a successful run.
pub enum Done {
    Success,
    RunFailed,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(a) => commands::simulate(a),
        Command::Batch(a) => commands::batch(a),
        Command::VerifyVisibility(a) => commands::verify_visibility(a),
        Command::Generate(a) => commands::generate(a),
        Command::Render(a) => commands::render(a),
    };
    match result {
        Ok(Done::Success) => ExitCode::SUCCESS,
        Ok(Done::RunFailed) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
