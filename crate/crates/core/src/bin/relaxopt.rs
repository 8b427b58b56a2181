use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use relaxopt::cli::{run_gap, run_hull, run_solve, run_synthesize, RunConfig, RunStatus};

/// Relaxed-control trajectory optimization with PWM input synthesis.
#[derive(Parser)]
#[command(version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (overrides `output_dir`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override a config field, e.g. `--set solver.max_iters=50`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the descent and write trajectory, weights, log and summary.
    Solve(Common),
    /// Convert a weights file into a PWM schedule and chattering report.
    Synthesize {
        #[command(flatten)]
        common: Common,
        /// Weights file; `atoms.csv` is read from the same directory.
        #[arg(long)]
        weights: Option<PathBuf>,
    },
    /// Pontryagin gap of a schedule file.
    Gap {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        schedule: Option<PathBuf>,
    },
    /// Sampled vector-field set and its convex hull at one state.
    Hull {
        #[command(flatten)]
        common: Common,
        /// State at which to sample, comma separated.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        point: Option<Vec<f64>>,
    },
}

fn load(common: &Common) -> anyhow::Result<RunConfig> {
    let mut cfg = RunConfig::from_file(common.config.as_deref(), &common.sets)?;
    if let Some(out) = &common.out {
        cfg.output_dir = out.clone();
    }
    Ok(cfg)
}

fn run(cli: Cli) -> anyhow::Result<RunStatus> {
    match cli.command {
        Command::Solve(common) => run_solve(&load(&common)?),
        Command::Synthesize { common, weights } => run_synthesize(&load(&common)?, weights.as_deref()),
        Command::Gap { common, schedule } => {
            let gap = run_gap(&load(&common)?, schedule.as_deref())?;
            println!("gap = {gap:.16e}");
            Ok(RunStatus::Completed)
        }
        Command::Hull { common, point } => {
            let mut cfg = load(&common)?;
            if point.is_some() {
                cfg.hull.point = point;
            }
            run_hull(&cfg)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(status) => ExitCode::from(status.exit_code() as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
