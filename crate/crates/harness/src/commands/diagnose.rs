use std::path::Path;

use anyhow::Result;
use gridhit::chain::{
    asymptotic_covariance_vector, asymptotic_variance_response, chain_stats,
    ergodic_average, estimate_transition_matrix, is_type_i, is_type_ii, occupancy, p_even, p_odd, ErgodicAverage,
};
use gridhit::estimator::GainSpec;
use gridhit::{Record, TransitionMatrix};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::config::Experiment;
use crate::io::{ensure_dir, write_json};
use crate::setup::{matrix_rows, model_chain, rows_matrix, simulate, Check, Truth};

pub const POWER: u32 = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParityBlock {
    pub size: usize,
    /// `max |block(A²·A²) - block(A²)·block(A²)|`.
    pub multiplicativity_defect: f64,
    /// Largest column range of `block(A²)^64`.
    pub row_spread: f64,
    pub min_entry: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParityReport {
    pub square_is_type_ii: bool,
    pub odd: Option<ParityBlock>,
    pub even: Option<ParityBlock>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationaryReport {
    pub p: Vec<f64>,
    /// `|pA - p|_∞`.
    pub fixed_point_residual: f64,
    pub min_p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ergodic {
    pub name: String,
    pub average: ErgodicAverage,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Asymptotic {
    Scalar {
        sigma2: f64,
    },
    Vector {
        k: Vec<Vec<f64>>,
        covariance: Vec<Vec<f64>>,
        hessian: Vec<Vec<f64>>,
        eigenvalues: Vec<(f64, f64)>,
    },
    Unavailable {
        reason: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub cycles: usize,
    pub estimated: TransitionMatrix,
    pub model: TransitionMatrix,
    /// `(â - a) / sqrt(a (1 - a) / n_i)` on the off-diagonal support.
    pub entry_z: Vec<Vec<f64>>,
    pub type_i: bool,
    pub tridiagonal_support: bool,
    pub parity_estimated: ParityReport,
    pub parity_model: ParityReport,
    /// Absent when the estimated chain is reducible.
    pub stationary_estimated: Option<StationaryReport>,
    pub stationary_model: StationaryReport,
    pub occupancy: Vec<f64>,
    /// `max_d |occupancy_d - p_d|` with `p` from the estimated matrix.
    pub occupancy_deviation: Option<f64>,
    pub occupancy_deviation_model: f64,
    pub ergodic: Vec<Ergodic>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub asymptotic: Option<Asymptotic>,
    pub checks: Vec<Check>,
}

fn block_report(a2: &TransitionMatrix, block: fn(&TransitionMatrix) -> gridhit::Result<TransitionMatrix>) -> Option<ParityBlock> {
    let b = block(a2).ok()?;
    if b.is_empty() {
        return None;
    }
    let direct = block(&a2.mul(a2)).ok()?;
    let prod = b.mul(&b);
    let multiplicativity_defect = direct
        .entries
        .iter()
        .flatten()
        .zip(prod.entries.iter().flatten())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max);
    let lim = b.pow(POWER);
    let row_spread = (0..lim.len())
        .map(|j| {
            let col = lim.entries.iter().map(|r| r[j]);
            col.clone().fold(f64::NEG_INFINITY, f64::max) - col.fold(f64::INFINITY, f64::min)
        })
        .fold(0.0, f64::max);
    let min_entry = lim.entries.iter().flatten().copied().fold(f64::INFINITY, f64::min);
    Some(ParityBlock { size: b.len(), multiplicativity_defect, row_spread, min_entry })
}

pub fn parity(a: &TransitionMatrix) -> ParityReport {
    let a2 = a.pow(2);
    ParityReport { square_is_type_ii: is_type_ii(&a2), odd: block_report(&a2, p_odd), even: block_report(&a2, p_even) }
}

pub fn stationary_report(a: &TransitionMatrix, p: &[f64]) -> StationaryReport {
    let pa = DMatrix::from_row_slice(1, p.len(), p) * a.matrix();
    let fixed_point_residual = pa.iter().zip(p).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    StationaryReport { p: p.to_vec(), fixed_point_residual, min_p: p.iter().copied().fold(f64::INFINITY, f64::min) }
}

fn entry_z(est: &TransitionMatrix, model: &TransitionMatrix) -> Vec<Vec<f64>> {
    let counts = est.counts.clone().unwrap_or_default();
    (0..model.len())
        .map(|i| {
            let n: u64 = counts.get(i).map_or(0, |r| r.iter().sum());
            (0..model.len())
                .map(|j| {
                    let a = model.get(i, j);
                    let se = (a * (1.0 - a) / n as f64).sqrt();
                    if i.abs_diff(j) != 1 || se == 0.0 || n == 0 {
                        0.0
                    } else {
                        (est.get(i, j) - a) / se
                    }
                })
                .collect()
        })
        .collect()
}

fn asymptotic(exp: &Experiment) -> Option<Asymptotic> {
    let est = exp.estimator.as_ref()?;
    let out = (|| -> Result<Asymptotic> {
        let truth = Truth::new(exp, est)?;
        Ok(match &truth.gain {
            GainSpec::MatrixK { k } => {
                let cov = asymptotic_covariance_vector(&truth.table, &truth.p, &est.response, &rows_matrix(k))?;
                Asymptotic::Vector {
                    k: k.clone(),
                    covariance: matrix_rows(&cov.stationary_cov),
                    hessian: matrix_rows(&cov.hessian),
                    eigenvalues: cov.eigenvalues,
                }
            }
            GainSpec::TableAlpha => Asymptotic::Scalar { sigma2: asymptotic_variance_response(&truth.table, &truth.p, &est.response)? },
            _ => Asymptotic::Unavailable { reason: "the covariance prediction needs a table or matrix gain".into() },
        })
    })();
    Some(out.unwrap_or_else(|e| Asymptotic::Unavailable { reason: format!("{e:#}") }))
}

pub fn analyze(exp: &Experiment, stream: &[Record]) -> Result<Diagnostics> {
    let estimated = estimate_transition_matrix(stream, &exp.grid)?;
    let (model, p_model) = model_chain(exp)?;
    let occupancy = occupancy(stream, &exp.grid)?;
    let stats = chain_stats(stream, &exp.grid).ok();
    let type_i = is_type_i(&estimated);
    let tridiagonal_support = estimated.is_tridiagonal_off_diagonal();
    let parity_estimated = parity(&estimated);
    let parity_model = parity(&model);
    let stationary_estimated = stats.as_ref().map(|c| stationary_report(&estimated, &c.stationary));
    let stationary_model = stationary_report(&model, &p_model);
    let occupancy_deviation = stats.as_ref().map(|c| c.max_deviation());
    let occupancy_deviation_model = occupancy.iter().zip(&p_model).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let p = stats.as_ref().map_or(&p_model, |c| &c.stationary);
    let mut ergodic = vec![
        Ergodic { name: "one".into(), average: ergodic_average(stream, &exp.grid, p, |_| 1.0)? },
        Ergodic { name: "identity".into(), average: ergodic_average(stream, &exp.grid, p, |d| d)? },
    ];
    for &d0 in exp.grid.points() {
        ergodic.push(Ergodic {
            name: format!("indicator({d0})"),
            average: ergodic_average(stream, &exp.grid, p, |d| if d == d0 { 1.0 } else { 0.0 })?,
        });
    }
    let mut checks = vec![
        Check::new("type_i", type_i && tridiagonal_support, "estimated matrix has zero diagonal parity and tridiagonal support"),
        Check::new("two_step_type_ii", parity_estimated.square_is_type_ii, "A² is type II"),
    ];
    for (name, block) in [("odd", &parity_estimated.odd), ("even", &parity_estimated.even)] {
        if let Some(b) = block {
            checks.push(Check::new(
                format!("{name}_multiplicativity"),
                b.multiplicativity_defect <= 1e-12,
                format!("defect {:.3e}", b.multiplicativity_defect),
            ));
            checks.push(Check::new(
                format!("{name}_rank_one_limit"),
                b.row_spread < 1e-10 && b.min_entry > 0.0,
                format!("row spread {:.3e}, min entry {:.3e} at power {POWER}", b.row_spread, b.min_entry),
            ));
        }
    }
    match &stationary_estimated {
        Some(st) => checks.push(Check::new(
            "stationary_fixed_point",
            st.fixed_point_residual <= 1e-12,
            format!("|pA - p| = {:.3e}", st.fixed_point_residual),
        )),
        None => checks.push(Check::new(
            "stationary_fixed_point",
            false,
            format!("estimated chain is reducible; unvisited rows {:?}", estimated.unvisited),
        )),
    }
    if let Some(tol) = exp.config.assertions.occupancy_tolerance {
        let dev = occupancy_deviation.unwrap_or(f64::NAN);
        checks.push(Check::new("occupancy", dev < tol, format!("max |occupancy - p| = {dev:.4} against {tol}")));
    }
    let entry_z = entry_z(&estimated, &model);
    Ok(Diagnostics {
        cycles: stream.len(),
        estimated,
        model,
        entry_z,
        type_i,
        tridiagonal_support,
        parity_estimated,
        parity_model,
        stationary_estimated,
        stationary_model,
        occupancy,
        occupancy_deviation,
        occupancy_deviation_model,
        ergodic,
        asymptotic: asymptotic(exp),
        checks,
    })
}

/// Diagnoses `stream`, or replication 0 of the experiment when none is given.
pub fn run(exp: &Experiment, stream: Option<&[Record]>) -> Result<Diagnostics> {
    match stream {
        Some(s) => analyze(exp, s),
        None => analyze(exp, &simulate(exp, exp.config.run.cycles, 0)?),
    }
}

pub fn write(dir: &Path, d: &Diagnostics) -> Result<()> {
    ensure_dir(dir)?;
    write_json(&dir.join("diagnostics.json"), d)
}
