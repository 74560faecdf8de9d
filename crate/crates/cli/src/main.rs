//! `lsi`: surface integrals over density level sets from the command line.

mod commands;
mod config;
mod selftest;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};

use commands::SimulateArgs;
use config::{EulerChoice, RunFlags};

#[derive(Parser)]
#[command(name = "lsi", version, about = "Level-set surface integral estimation")]
struct Cli {
    /// Worker threads (0 = all cores).
    #[arg(long, global = true, env = "LSI_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate a surface integral over a level set, with a confidence interval
    /// for sample-based fields.
    Estimate(RunFlags),
    /// Curvature bundle of the field at each listed point.
    Curvature {
        #[command(flatten)]
        flags: RunFlags,
        /// Points file (same formats as --input).
        #[arg(long)]
        points: PathBuf,
    },
    /// Euler characteristic of a level surface in three dimensions.
    Euler {
        #[command(flatten)]
        flags: RunFlags,
        #[arg(long, value_enum)]
        method: Option<EulerChoice>,
    },
    /// Minkowski functionals of the super-level set and the Willmore energy.
    Minkowski(RunFlags),
    /// Seeded Monte Carlo study from a JSON study config.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
        #[arg(long)]
        replicates: Option<usize>,
        #[arg(long)]
        base_seed: Option<u64>,
        /// Write a standardized-estimate histogram per (n, estimator).
        #[arg(long)]
        histograms: bool,
    },
    /// Built-in numerical checks; prints PASS/FAIL per check.
    Selftest,
    /// Draw a sample from an analytic density.
    Sample {
        #[command(flatten)]
        flags: RunFlags,
        #[arg(long)]
        n: usize,
    },
}

const EXIT_VALIDATION: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Err(e) = init_threads(cli.threads) {
        eprintln!("error: {e:#}");
        return ExitCode::from(EXIT_VALIDATION);
    }
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn init_threads(n: Option<usize>) -> Result<()> {
    if let Some(n) = n.filter(|&n| n > 0) {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()?;
    }
    Ok(())
}

fn run(cmd: Command) -> Result<ExitCode> {
    match cmd {
        Command::Estimate(flags) => commands::cmd_estimate(flags.resolve()?)?,
        Command::Curvature { flags, points } => {
            let mut cfg = flags.resolve()?;
            cfg.points = Some(points);
            commands::cmd_curvature(cfg)?
        }
        Command::Euler { flags, method } => {
            let mut cfg = flags.resolve()?;
            cfg.method = method.or(cfg.method);
            commands::cmd_euler(cfg)?
        }
        Command::Minkowski(flags) => commands::cmd_minkowski(flags.resolve()?)?,
        Command::Simulate {
            config,
            out_dir,
            replicates,
            base_seed,
            histograms,
        } => commands::cmd_simulate(SimulateArgs {
            config,
            out_dir,
            replicates,
            base_seed,
            histograms,
        })?,
        Command::Selftest => {
            if selftest::run() > 0 {
                return Ok(ExitCode::from(EXIT_NUMERICAL));
            }
        }
        Command::Sample { flags, n } => commands::cmd_sample(flags.resolve()?, n)?,
    }
    Ok(ExitCode::SUCCESS)
}

/// Bad input maps to 2, numerical breakdown inside the estimators to 3.
fn exit_code(e: &anyhow::Error) -> u8 {
    match e.chain().find_map(|c| c.downcast_ref::<lsi_core::Error>()) {
        Some(inner) if !inner.is_validation() => EXIT_NUMERICAL,
        _ => EXIT_VALIDATION,
    }
}
