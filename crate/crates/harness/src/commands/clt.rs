use std::path::Path;

use anyhow::{bail, Context, Result};
use gridhit::chain::asymptotic_variance_response;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::commands::estimate::run_stream;
use crate::config::{Experiment, Variant};
use crate::io::{ensure_dir, write_json};
use crate::setup::{all_passed, simulate, Check, Truth};
use crate::stats::{mean, normal_quantile, quantile, variance};

pub const LEVELS: [f64; 9] = [0.01, 0.05, 0.1, 0.25, 0.5, 0.75, 0.9, 0.95, 0.99];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantileRow {
    pub level: f64,
    pub normal: f64,
    /// Quantile of `(x - mean) / sd` with the sample mean and sd.
    pub standardized: f64,
    /// Quantile of `x / σ` with the predicted `σ`.
    pub theory_standardized: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CltSummary {
    pub replications: usize,
    pub cycles: usize,
    pub updates: usize,
    pub seed: u64,
    pub dt: f64,
    pub truth: f64,
    pub predicted_variance: f64,
    pub empirical_mean: f64,
    pub empirical_variance: f64,
    pub variance_ratio: f64,
    /// `3 σ / √M`.
    pub mean_band: f64,
    pub quantiles: Vec<QuantileRow>,
    pub failed_replications: usize,
    pub checks: Vec<Check>,
}

impl CltSummary {
    pub fn passed(&self) -> bool {
        all_passed(&self.checks)
    }
}

/// `√n (Θ_n - θ*)` for every replication of the normalized recursion.
pub fn samples(exp: &Experiment) -> Result<(Vec<f64>, usize, usize)> {
    let est = exp.estimator()?;
    if est.variant != Variant::Normalized {
        bail!("clt needs the normalized variant, got {:?}", est.variant);
    }
    let truth = Truth::new(exp, est)?;
    let target = est.truth(&exp.theta_star)[0];
    let outcomes: Vec<Result<(f64, usize)>> = (0..exp.config.run.replications as u64)
        .into_par_iter()
        .map(|r| {
            let stream = simulate(exp, exp.config.run.cycles, r)?;
            let (state, _) = run_stream(exp, est, &truth, &stream, 0)?;
            let n = state.n();
            Ok(((n as f64).sqrt() * (state.theta()[0] - target), n))
        })
        .collect();
    let mut xs = Vec::new();
    let mut updates = 0;
    let mut failed = 0;
    for o in outcomes {
        match o {
            Ok((x, n)) => {
                xs.push(x);
                updates = n;
            }
            Err(_) => failed += 1,
        }
    }
    Ok((xs, updates, failed))
}

pub fn summarize(exp: &Experiment, xs: &[f64], updates: usize, failed: usize) -> Result<CltSummary> {
    let est = exp.estimator()?;
    let truth = Truth::new(exp, est)?;
    let predicted = asymptotic_variance_response(&truth.table, &truth.p, &est.response).context("predicted variance")?;
    let m = mean(xs);
    let v = variance(xs);
    let sd = v.sqrt();
    let sigma = predicted.sqrt();
    let standardized: Vec<f64> = xs.iter().map(|x| (x - m) / sd).collect();
    let theory: Vec<f64> = xs.iter().map(|x| x / sigma).collect();
    let quantiles: Vec<QuantileRow> = LEVELS
        .iter()
        .map(|&q| QuantileRow {
            level: q,
            normal: normal_quantile(q),
            standardized: quantile(&standardized, q),
            theory_standardized: quantile(&theory, q),
        })
        .collect();
    let ratio = v / predicted;
    let mean_band = 3.0 * sigma / (xs.len() as f64).sqrt();
    let mut checks = vec![
        Check::new("replications_completed", failed == 0, format!("{failed} replications failed")),
        Check::new("mean_band", m.abs() <= mean_band, format!("mean {m:.4} against band {mean_band:.4}")),
    ];
    let a = &exp.config.assertions;
    if let Some([lo, hi]) = a.variance_ratio {
        checks.push(Check::new(
            "variance_ratio",
            (lo..=hi).contains(&ratio),
            format!("empirical/predicted = {v:.4}/{predicted:.4} = {ratio:.4} against [{lo}, {hi}]"),
        ));
    }
    if let Some(tol) = a.quantile_tolerance {
        for q in quantiles.iter().filter(|q| q.level == 0.05 || q.level == 0.95) {
            let gap = (q.standardized - q.normal).abs();
            checks.push(Check::new(
                format!("quantile_{:.0}", q.level * 100.0),
                gap <= tol,
                format!("standardized {:.4} against normal {:.4} (gap {gap:.4}, tolerance {tol})", q.standardized, q.normal),
            ));
        }
    }
    Ok(CltSummary {
        replications: xs.len() + failed,
        cycles: exp.config.run.cycles,
        updates,
        seed: exp.config.run.seed,
        dt: exp.config.run.dt,
        truth: est.truth(&exp.theta_star)[0],
        predicted_variance: predicted,
        empirical_mean: m,
        empirical_variance: v,
        variance_ratio: ratio,
        mean_band,
        quantiles,
        failed_replications: failed,
        checks,
    })
}

pub fn run(exp: &Experiment) -> Result<(Vec<f64>, CltSummary)> {
    let (xs, updates, failed) = samples(exp)?;
    if xs.len() < 2 {
        bail!("clt needs at least two successful replications, got {}", xs.len());
    }
    let summary = summarize(exp, &xs, updates, failed)?;
    Ok((xs, summary))
}

#[derive(Serialize)]
struct SampleRow {
    replication: usize,
    scaled_error: f64,
}

pub fn write(dir: &Path, xs: &[f64], summary: &CltSummary) -> Result<()> {
    ensure_dir(dir)?;
    write_json(&dir.join("clt_summary.json"), summary)?;
    let path = dir.join("clt_samples.csv");
    let mut w = csv::Writer::from_path(&path).with_context(|| format!("writing {}", path.display()))?;
    for (replication, &scaled_error) in xs.iter().enumerate() {
        w.serialize(SampleRow { replication, scaled_error })?;
    }
    w.flush()?;
    Ok(())
}
