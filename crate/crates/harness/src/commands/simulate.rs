use std::path::Path;
use std::time::Instant;

use anyhow::Result;
use gridhit::moments::{Observable, TimeObservable};
use gridhit::{Record, Table};
use serde::{Deserialize, Serialize};

use crate::config::Experiment;
use crate::io::{ensure_dir, write_json, write_stream};
use crate::setup::{simulate, truth_table, Check};
use crate::stats::Moments;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Agreement {
    pub empirical: f64,
    pub predicted: f64,
    pub se: f64,
    pub z: f64,
}

impl Agreement {
    fn new(empirical: f64, predicted: f64, se: f64) -> Self {
        Self { empirical, predicted, se, z: (empirical - predicted) / se }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointAgreement {
    pub d: f64,
    pub visits: usize,
    pub right_exit: Agreement,
    pub mean_time: Agreement,
    pub var_time: Agreement,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateSummary {
    pub seed: u64,
    pub stream_id: u64,
    pub cycles: usize,
    pub dt: f64,
    pub wall_seconds: f64,
    pub points: Vec<PointAgreement>,
    pub max_abs_z: f64,
    /// Root mean square of all z-scores.
    pub rms_z: f64,
    pub checks: Vec<Check>,
}

/// Empirical exit law of `stream` at every grid point against `table`.
pub fn agreement(stream: &[Record], table: &Table) -> Vec<PointAgreement> {
    table
        .points
        .iter()
        .map(|p| {
            let here: Vec<&Record> = stream.iter().filter(|r| r.grid_point == p.d).collect();
            let n = here.len();
            let right = here.iter().filter(|r| r.exit_point == p.right).count() as f64 / n as f64;
            let times: Vec<f64> = here.iter().map(|r| r.exit_elapsed).collect();
            let m = Moments::of(&times);
            PointAgreement {
                d: p.d,
                visits: n,
                right_exit: Agreement::new(right, p.prob_right, (p.prob_right * (1.0 - p.prob_right) / n as f64).sqrt()),
                mean_time: Agreement::new(m.mean, p.eta_time, m.mean_se),
                var_time: Agreement::new(m.variance, p.var_time, m.variance_se),
            }
        })
        .collect()
}

pub fn z_scores(points: &[PointAgreement]) -> Vec<f64> {
    points.iter().flat_map(|p| [p.right_exit.z, p.mean_time.z, p.var_time.z]).collect()
}

pub fn summarize(exp: &Experiment, stream: &[Record], stream_id: u64, wall_seconds: f64) -> Result<SimulateSummary> {
    let table = truth_table(exp, Observable::Identity, TimeObservable::Identity)?;
    let points = agreement(stream, &table);
    let z = z_scores(&points);
    let max_abs_z = z.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let rms_z = (z.iter().map(|v| v * v).sum::<f64>() / z.len() as f64).sqrt();
    let mut checks = Vec::new();
    if let Some(band) = exp.config.assertions.band_sigma {
        checks.push(Check::new("exit_law_band", max_abs_z <= band, format!("max |z| = {max_abs_z:.3} against {band}")));
    }
    Ok(SimulateSummary {
        seed: exp.config.run.seed,
        stream_id,
        cycles: stream.len(),
        dt: exp.config.run.dt,
        wall_seconds,
        points,
        max_abs_z,
        rms_z,
        checks,
    })
}

/// The stream of replication 0 and its exit-law summary.
pub fn run(exp: &Experiment) -> Result<(Vec<Record>, SimulateSummary)> {
    let start = Instant::now();
    let stream = simulate(exp, exp.config.run.cycles, 0)?;
    let wall = start.elapsed().as_secs_f64();
    let summary = summarize(exp, &stream, 0, wall)?;
    Ok((stream, summary))
}

pub fn write(dir: &Path, stream: &[Record], summary: &SimulateSummary) -> Result<()> {
    ensure_dir(dir)?;
    write_stream(&dir.join("stream.csv"), stream)?;
    write_json(&dir.join("simulate_summary.json"), summary)
}
