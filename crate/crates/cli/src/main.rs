//! `fbvar`: batch front end. Each subcommand reads one JSON config and
//! writes an artifact directory with a manifest.

mod commands;
mod config;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use commands::{EstimateFlags, Global};

#[derive(Parser)]
#[command(name = "fbvar", version, about = "Factor-BART VAR estimation, forecasting and structural analysis")]
struct Cli {
    /// Worker threads; machine parallelism when unset or 0.
    #[arg(long, global = true, env = "FBVAR_THREADS")]
    threads: Option<usize>,
    /// Write an output directory other than the config's `out_dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Report wall-clock times (kept out of the manifest).
    #[arg(long, global = true)]
    timing: bool,
    /// Only print errors.
    #[arg(long, short, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate replication datasets from a synthetic design.
    Simulate { config: PathBuf },
    /// Run the Gibbs sampler and store the draws.
    Estimate {
        config: PathBuf,
        /// Continue from `checkpoint.bin` in the output directory.
        #[arg(long)]
        resume: bool,
        /// Stop after this many sweeps, leaving a checkpoint to resume from.
        #[arg(long)]
        stop_after: Option<usize>,
    },
    /// Predictive simulation from a stored chain.
    Forecast { config: PathBuf },
    /// Recursive out-of-sample comparison against a baseline.
    Evaluate { config: PathBuf },
    /// Generalized impulse responses to the static-factor shocks.
    Irf { config: PathBuf },
    /// Sensitivity of factor means and observables to one covariate.
    Pdp { config: PathBuf },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads.filter(|n| *n > 0) {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: could not start {n} threads: {e}");
            return ExitCode::FAILURE;
        }
    }
    let g = Global {
        out: cli.out,
        timing: cli.timing,
        quiet: cli.quiet,
    };
    let result = match &cli.command {
        Command::Simulate { config } => commands::simulate(config, &g),
        Command::Estimate {
            config,
            resume,
            stop_after,
        } => commands::estimate(
            config,
            &g,
            &EstimateFlags {
                resume: *resume,
                stop_after: *stop_after,
            },
        ),
        Command::Forecast { config } => commands::forecast(config, &g),
        Command::Evaluate { config } => commands::evaluate(config, &g),
        Command::Irf { config } => commands::irf(config, &g),
        Command::Pdp { config } => commands::pdp(config, &g),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
