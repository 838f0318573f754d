use std::path::Path;

use anyhow::Result;
use gridhit::moments::{monotonicity_scan, MonotonicityReport, Observable, TimeObservable};
use gridhit::Table;
use serde::{Deserialize, Serialize};

use crate::config::Experiment;
use crate::io::{ensure_dir, write_json};
use crate::setup::{table_observables, truth_table, Check};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToleranceCheck {
    pub rel_tol: f64,
    pub tighter_rel_tol: f64,
    /// Largest change of a mean or variance entry, relative to `max(1, |value|)`.
    pub max_change: f64,
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentsReport {
    pub monotonicity: Vec<MonotonicityReport<f64>>,
    pub tolerance: ToleranceCheck,
    pub checks: Vec<Check>,
}

fn observables(exp: &Experiment) -> (Observable, TimeObservable) {
    exp.estimator.as_ref().map_or((Observable::Identity, TimeObservable::Identity), |e| table_observables(&e.response))
}

fn max_change(a: &Table, b: &Table) -> f64 {
    let rel = |x: f64, y: f64| (x - y).abs() / x.abs().max(1.0);
    a.points
        .iter()
        .zip(&b.points)
        .map(|(p, q)| {
            rel(p.eta_value, q.eta_value)
                .max(rel(p.eta_time, q.eta_time))
                .max(rel(p.var_value, q.var_value))
                .max(rel(p.var_time, q.var_time))
                .max(rel(p.prob_right, q.prob_right))
        })
        .fold(0.0, f64::max)
}

pub fn run(exp: &Experiment) -> Result<(Table, MomentsReport)> {
    let (f, g) = observables(exp);
    let table = truth_table(exp, f, g)?;
    let mut tight = exp.clone();
    tight.quad.rel_tol = exp.quad.rel_tol / 2.0;
    let again = truth_table(&tight, f, g)?;
    let tolerance = ToleranceCheck {
        rel_tol: exp.quad.rel_tol,
        tighter_rel_tol: tight.quad.rel_tol,
        max_change: max_change(&table, &again),
        bound: 10.0 * exp.quad.rel_tol,
    };
    let mut monotonicity = Vec::new();
    for c in 0..exp.model.dimension() {
        let t = exp.theta_star[c];
        for &d in exp.grid.points() {
            monotonicity.push(monotonicity_scan(&exp.model, &exp.theta_star, c, &exp.grid, d, f, (t - 0.5, t + 0.5), 11, &exp.quad));
        }
    }
    let checks = vec![Check::new(
        "tolerance_self_check",
        tolerance.max_change < tolerance.bound,
        format!("max change {:.3e} against bound {:.3e}", tolerance.max_change, tolerance.bound),
    )];
    Ok((table, MomentsReport { monotonicity, tolerance, checks }))
}

pub fn write(dir: &Path, table: &Table, report: &MomentsReport) -> Result<()> {
    ensure_dir(dir)?;
    write_json(&dir.join("moment_table.json"), table)?;
    write_json(&dir.join("moments_report.json"), report)
}
