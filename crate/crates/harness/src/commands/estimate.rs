use std::path::Path;
use std::time::Instant;

use anyhow::{Context, Result};
use gridhit::estimator::{stationary_residual, TrajectoryRow};
use gridhit::{Estimator, Record};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{EstimatorSetup, Experiment, Variant};
use crate::io::{ensure_dir, write_json, write_trajectory};
use crate::setup::{all_passed, cached_moments, direct_moments, simulate, Check, Truth};
use crate::stats::{median, Quantiles};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationRow {
    pub replication: u64,
    pub final_theta: Vec<f64>,
    pub error_norm: f64,
    /// `|ḡ(Θ_final)|` under the model stationary law.
    pub residual_norm: f64,
    pub updates: usize,
    pub skipped: usize,
    pub skip_fraction: f64,
    pub moment_rebuilds: usize,
    pub wall_seconds: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub variant: Variant,
    pub coordinates: Vec<usize>,
    pub truth: Vec<f64>,
    pub init: Vec<f64>,
    pub cycles: usize,
    pub seed: u64,
    pub dt: f64,
    pub outside_proven_hypotheses: bool,
    pub rows: Vec<ReplicationRow>,
    pub median_error: f64,
    pub error_quantiles: Quantiles,
    pub median_residual: f64,
    pub max_skip_fraction: f64,
    pub checks: Vec<Check>,
}

impl RunSummary {
    pub fn passed(&self) -> bool {
        all_passed(&self.checks)
    }
}

pub struct Replication {
    pub row: ReplicationRow,
    pub trajectory: Vec<TrajectoryRow<f64>>,
}

/// A fresh estimator at the configured start.
pub fn new_estimator(exp: &Experiment, est: &EstimatorSetup, truth: &Truth) -> Result<Estimator> {
    match est.variant {
        Variant::Normalized => Ok(Estimator::normalized(est.init[0], &truth.table, &est.response, exp.config.run.burn_in)?),
        _ => Ok(Estimator::new(est.init.clone(), est.schedule, truth.gain.clone(), est.space.clone())?),
    }
}

/// Runs the recursion over `stream`; returns the final state and the number of moment surface rebuilds.
pub fn run_stream(exp: &Experiment, est: &EstimatorSetup, truth: &Truth, stream: &[Record], stride: usize) -> Result<(Estimator, usize)> {
    let mut state = new_estimator(exp, est, truth)?;
    if stride > 0 {
        state = state.with_trajectory(stride);
    }
    let mut moments = cached_moments(exp, est)?;
    let records = match est.variant {
        Variant::Normalized => stream,
        _ => &stream[exp.config.run.burn_in.min(stream.len())..],
    };
    for rec in records {
        state.update(rec, &mut moments)?;
    }
    Ok((state, moments.rebuilds()))
}

fn residual_norm(exp: &Experiment, est: &EstimatorSetup, truth: &Truth, theta: &[f64]) -> Result<f64> {
    let mut direct = direct_moments(exp, est)?;
    let g = stationary_residual(theta, &truth.table, &mut direct, &truth.p)?;
    Ok(g.iter().map(|v| v * v).sum::<f64>().sqrt())
}

fn replication(exp: &Experiment, est: &EstimatorSetup, truth: &Truth, r: u64, given: Option<&[Record]>, stride: usize) -> Replication {
    let start = Instant::now();
    let target = est.truth(&exp.theta_star);
    let outcome = (|| -> Result<(Estimator, usize, f64)> {
        let owned;
        let stream = match given {
            Some(s) => s,
            None => {
                owned = simulate(exp, exp.config.run.cycles, r)?;
                &owned
            }
        };
        let (state, rebuilds) = run_stream(exp, est, truth, stream, stride)?;
        let res = residual_norm(exp, est, truth, state.theta())?;
        Ok((state, rebuilds, res))
    })();
    let wall_seconds = start.elapsed().as_secs_f64();
    match outcome {
        Ok((state, moment_rebuilds, residual)) => {
            let theta = state.theta().to_vec();
            let error_norm = theta.iter().zip(&target).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            Replication {
                row: ReplicationRow {
                    replication: r,
                    final_theta: theta,
                    error_norm,
                    residual_norm: residual,
                    updates: state.n(),
                    skipped: state.skipped(),
                    skip_fraction: state.skip_fraction(),
                    moment_rebuilds,
                    wall_seconds,
                    error: None,
                },
                trajectory: state.trajectory().to_vec(),
            }
        }
        Err(e) => Replication {
            row: ReplicationRow {
                replication: r,
                final_theta: vec![f64::NAN; target.len()],
                error_norm: f64::NAN,
                residual_norm: f64::NAN,
                updates: 0,
                skipped: 0,
                skip_fraction: 0.0,
                moment_rebuilds: 0,
                wall_seconds,
                error: Some(format!("{e:#}")),
            },
            trajectory: Vec::new(),
        },
    }
}

/// All replications, in parallel, each on its own random stream. With `stream`
/// given, a single replication replays it instead.
pub fn run(exp: &Experiment, stream: Option<&[Record]>) -> Result<(RunSummary, Vec<Replication>)> {
    let est = exp.estimator()?;
    let truth = Truth::new(exp, est)?;
    let stride = exp.config.output.trajectory_stride;
    let reps: Vec<Replication> = match stream {
        Some(s) => vec![replication(exp, est, &truth, 0, Some(s), stride)],
        None => (0..exp.config.run.replications as u64)
            .into_par_iter()
            .map(|r| replication(exp, est, &truth, r, None, stride))
            .collect(),
    };
    let rows: Vec<ReplicationRow> = reps.iter().map(|r| r.row.clone()).collect();
    Ok((summarize(exp, est, stream.map(|s| s.len()), rows), reps))
}

fn summarize(exp: &Experiment, est: &EstimatorSetup, replayed: Option<usize>, rows: Vec<ReplicationRow>) -> RunSummary {
    let ok: Vec<&ReplicationRow> = rows.iter().filter(|r| r.error.is_none()).collect();
    let errors: Vec<f64> = ok.iter().map(|r| r.error_norm).collect();
    let residuals: Vec<f64> = ok.iter().map(|r| r.residual_norm).collect();
    let max_skip_fraction = ok.iter().map(|r| r.skip_fraction).fold(0.0, f64::max);
    let (median_error, error_quantiles, median_residual) = if ok.is_empty() {
        let nan = f64::NAN;
        (nan, Quantiles { q10: nan, q25: nan, q50: nan, q75: nan, q90: nan }, nan)
    } else {
        (median(&errors), Quantiles::of(&errors), median(&residuals))
    };
    let failed = rows.len() - ok.len();
    let mut checks = vec![
        Check::new("replications_completed", failed == 0, format!("{failed} of {} replications failed", rows.len())),
        Check::new(
            "skip_budget",
            max_skip_fraction <= est.skip_budget,
            format!("largest skip fraction {max_skip_fraction:.2e} against {:.2e}", est.skip_budget),
        ),
    ];
    let a = &exp.config.assertions;
    if let Some(bound) = a.max_median_error {
        checks.push(Check::new("median_error", median_error < bound, format!("median error {median_error:.4} against {bound}")));
    }
    if let Some(bound) = a.max_median_residual {
        checks.push(Check::new(
            "median_residual",
            median_residual < bound,
            format!("median residual {median_residual:.3e} against {bound}"),
        ));
    }
    RunSummary {
        variant: est.variant,
        coordinates: est.coordinates.clone(),
        truth: est.truth(&exp.theta_star),
        init: est.init.clone(),
        cycles: replayed.unwrap_or(exp.config.run.cycles),
        seed: exp.config.run.seed,
        dt: exp.config.run.dt,
        outside_proven_hypotheses: est.outside_proven_hypotheses,
        rows,
        median_error,
        error_quantiles,
        median_residual,
        max_skip_fraction,
        checks,
    }
}

#[derive(Serialize)]
struct CsvRow {
    replication: u64,
    theta: String,
    error_norm: f64,
    residual_norm: f64,
    updates: usize,
    skipped: usize,
}

pub fn write(dir: &Path, summary: &RunSummary, reps: &[Replication]) -> Result<()> {
    ensure_dir(dir)?;
    write_json(&dir.join("summary.json"), summary)?;
    let path = dir.join("replications.csv");
    let mut w = csv::Writer::from_path(&path).with_context(|| format!("writing {}", path.display()))?;
    for r in &summary.rows {
        let theta = r.final_theta.iter().map(|t| format!("{t:.17e}")).collect::<Vec<_>>().join(" ");
        w.serialize(CsvRow {
            replication: r.replication,
            theta,
            error_norm: r.error_norm,
            residual_norm: r.residual_norm,
            updates: r.updates,
            skipped: r.skipped,
        })?;
    }
    w.flush()?;
    for rep in reps.iter().filter(|r| !r.trajectory.is_empty()) {
        write_trajectory(&dir.join(format!("trajectory_{}.csv", rep.row.replication)), &rep.trajectory)?;
    }
    Ok(())
}
