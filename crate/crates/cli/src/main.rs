//! `bicirc`: batch driver for bicircular sideband campaigns.
//!
//! One TOML config drives five stages that chain through an output directory:
//! generate (synthetic traces + truth sidecar), extract (per-angle beat
//! phases + dichroism), fit (partial-wave amplitudes/phases per sideband),
//! separate (short-range/continuum phase split into a delay table), and
//! report.  Exit codes: 0 success, 1 usage, 2 bad input or missing artifact,
//! 3 fit non-convergence.

mod config;
mod stages;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use bicirc_core::Error;
use clap::{Parser, Subcommand};

use crate::config::Pipeline;
use crate::stages::{Ctx, Manifest};

#[derive(Parser)]
#[command(name = "bicirc", version, about = "Bicircular sideband campaign pipeline")]
struct Cli {
    /// Pipeline configuration file.
    #[arg(long, global = true, default_value = "config.toml")]
    config: PathBuf,

    /// Directory receiving all artifacts.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    /// Override the noise master seed from the config.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Skip SVG plot emission.
    #[arg(long, global = true)]
    no_plots: bool,

    /// Override the fit weighting ("poisson" or "uniform").
    #[arg(long, global = true)]
    weighting: Option<String>,

    /// Override the fit multi-start count.
    #[arg(long, global = true)]
    starts: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize the delay-angle traces and the truth sidecar.
    Generate,
    /// Per-angle beat extraction and the dichroism spectrum.
    Extract,
    /// Fit partial-wave amplitudes and phases for each sideband pair.
    Fit,
    /// Split fitted phases into short-range and continuum parts.
    Separate,
    /// Summarize whatever artifacts the output directory holds.
    Report,
    /// Run generate, extract, fit, separate and report in order.
    RunAll,
}

fn run(cli: &Cli) -> Result<(), Error> {
    let pipeline = Pipeline::load(&cli.config)?;
    let ctx = Ctx {
        pipeline,
        out: cli.out.clone(),
        plots: !cli.no_plots,
        seed_override: cli.seed,
        weighting_override: cli.weighting.clone(),
        starts_override: cli.starts,
    };
    let mut manifest = Manifest::open(&ctx);
    let result = match cli.command {
        Command::Generate => stages::generate(&ctx, &mut manifest),
        Command::Extract => stages::extract(&ctx, &mut manifest),
        Command::Fit => stages::fit(&ctx, &mut manifest),
        Command::Separate => stages::separate(&ctx, &mut manifest),
        Command::Report => stages::report(&ctx, &mut manifest),
        Command::RunAll => stages::run_all(&ctx, &mut manifest),
    };
    // The manifest reflects what actually landed on disk, even on failure.
    let wrote = manifest.write(&ctx.out);
    result.and(wrote)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap renders its own message (also for --help/--version)
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e @ Error::NonConvergence(_)) => {
            eprintln!("error: {e}");
            ExitCode::from(3)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
