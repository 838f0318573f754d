use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use gridhit_harness::commands::{clt, diagnose, estimate, moments, simulate};
use gridhit_harness::config::Experiment;
use gridhit_harness::io::read_stream;
use gridhit_harness::setup::{all_passed, Check};

#[derive(Debug, Parser)]
#[command(name = "gridhit", version, about = "Grid-hit estimators for scalar diffusions")]
struct Cli {
    /// Experiment configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides `run.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides `output.directory`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for the replications; defaults to all cores.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Moment table at the true parameter, tolerance self-check and monotonicity scans.
    Moments,
    /// One observation stream and its agreement with the predicted exit law.
    Simulate,
    /// Replicated estimation runs.
    Estimate {
        /// Replays a stream written by `simulate` instead of simulating.
        #[arg(long)]
        stream: Option<PathBuf>,
    },
    /// Replications of the normalized recursion against the predicted variance.
    Clt,
    /// Embedded chain structure, stationary law and asymptotic predictions.
    Diagnose {
        #[arg(long)]
        stream: Option<PathBuf>,
    },
}

fn report(checks: &[Check]) {
    for c in checks {
        eprintln!("[{}] {}: {}", if c.passed { "pass" } else { "FAIL" }, c.name, c.detail);
    }
}

fn run(cli: Cli) -> Result<bool> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().context("configuring the thread pool")?;
    }
    let path = cli.config.context("--config <path> is required")?;
    let mut exp = Experiment::load(&path)?;
    if let Some(seed) = cli.seed {
        exp.config.run.seed = seed;
    }
    let out = cli.out.unwrap_or_else(|| PathBuf::from(&exp.config.output.directory));
    let dir: &Path = &out;
    let stream = |p: &Option<PathBuf>| p.as_ref().map(|p| read_stream(p)).transpose();
    let checks = match &cli.command {
        Command::Moments => {
            let (table, rep) = moments::run(&exp)?;
            moments::write(dir, &table, &rep)?;
            rep.checks
        }
        Command::Simulate => {
            let (s, summary) = simulate::run(&exp)?;
            simulate::write(dir, &s, &summary)?;
            eprintln!("{} cycles, max |z| {:.3}, rms z {:.3}", summary.cycles, summary.max_abs_z, summary.rms_z);
            summary.checks
        }
        Command::Estimate { stream: file } => {
            let given = stream(file)?;
            let (summary, reps) = estimate::run(&exp, given.as_deref())?;
            estimate::write(dir, &summary, &reps)?;
            eprintln!("median error {:.4}, median residual {:.3e}", summary.median_error, summary.median_residual);
            summary.checks
        }
        Command::Clt => {
            let (xs, summary) = clt::run(&exp)?;
            clt::write(dir, &xs, &summary)?;
            eprintln!(
                "variance {:.4} against predicted {:.4} (ratio {:.3})",
                summary.empirical_variance, summary.predicted_variance, summary.variance_ratio
            );
            summary.checks
        }
        Command::Diagnose { stream: file } => {
            let given = stream(file)?;
            let d = diagnose::run(&exp, given.as_deref())?;
            diagnose::write(dir, &d)?;
            d.checks
        }
    };
    report(&checks);
    eprintln!("wrote {}", dir.display());
    Ok(all_passed(&checks))
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
