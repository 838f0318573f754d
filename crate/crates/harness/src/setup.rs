//! Pieces shared by the commands: truth tables, providers, gains and streams.

use anyhow::{Context, Result};
use gridhit::chain::{information_matrices, model_transition_matrix, stationary_vector};
use gridhit::estimator::{CachedMoments, DirectMoments, GainSpec, ParameterEmbedding};
use gridhit::moments::{build_moment_table, Observable, Response, TimeObservable};
use gridhit::simulator::{generate_stream, RngStream};
use gridhit::{Record, Table, TransitionMatrix};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::config::{EstimatorSetup, Experiment, GainConfig};

/// Observables of the table that carries the moments of `response`.
pub fn table_observables(response: &Response<f64>) -> (Observable, TimeObservable) {
    match *response {
        Response::Value { f } => (f, TimeObservable::Identity),
        Response::Time { g } => (Observable::Identity, g),
        Response::Combined { f, .. } => (f, TimeObservable::Identity),
    }
}

pub fn truth_table(exp: &Experiment, f: Observable, g: TimeObservable) -> Result<Table> {
    build_moment_table(&exp.model, &exp.theta_star, &exp.grid, f, g, &exp.quad).context("building the moment table at the true parameter")
}

/// Keeps only the estimated coordinates of the derivative vectors.
pub fn restrict_table(table: &Table, coordinates: &[usize]) -> Table {
    let pick = |v: &[f64]| coordinates.iter().map(|&c| v[c]).collect::<Vec<_>>();
    let mut t = table.clone();
    t.theta = pick(&table.theta);
    for p in &mut t.points {
        p.alpha_value = pick(&p.alpha_value);
        p.alpha_time = pick(&p.alpha_time);
    }
    t
}

/// Transition matrix of the embedded chain at the true parameter and its stationary vector.
pub fn model_chain(exp: &Experiment) -> Result<(TransitionMatrix, Vec<f64>)> {
    let a = model_transition_matrix(&exp.model, &exp.theta_star, &exp.grid, &exp.quad)?;
    let p = stationary_vector(&a)?;
    Ok((a, p))
}

pub fn direct_moments(exp: &Experiment, est: &EstimatorSetup) -> Result<DirectMoments<f64>> {
    let emb = ParameterEmbedding::new(exp.theta_star.clone(), est.coordinates.clone())?;
    Ok(DirectMoments::new(exp.model.clone(), exp.grid.clone(), emb, est.response, exp.quad)?)
}

pub fn cached_moments(exp: &Experiment, est: &EstimatorSetup) -> Result<CachedMoments<f64>> {
    Ok(CachedMoments::new(direct_moments(exp, est)?, est.trust_radius)?)
}

/// Everything an estimation run needs that does not depend on the replication.
#[derive(Debug, Clone)]
pub struct Truth {
    /// Estimated coordinates only.
    pub table: Table,
    pub transitions: TransitionMatrix,
    pub p: Vec<f64>,
    pub gain: GainSpec<f64>,
}

impl Truth {
    pub fn new(exp: &Experiment, est: &EstimatorSetup) -> Result<Self> {
        let (f, g) = table_observables(&est.response);
        let table = restrict_table(&truth_table(exp, f, g)?, &est.coordinates);
        let (transitions, p) = model_chain(exp)?;
        let gain = match &est.gain {
            GainConfig::ConstantSign { sign } => GainSpec::ConstantSign { sign: *sign },
            GainConfig::RatioSign => GainSpec::RatioSign,
            GainConfig::TableAlpha => GainSpec::TableAlpha,
            GainConfig::MatrixK { k } => GainSpec::MatrixK { k: k.clone() },
            GainConfig::InverseHessian { scale } => {
                let (hess, _) = information_matrices(&table, &p, &est.response)?;
                let inv = hess.try_inverse().context("the Hessian at the true parameter is singular")? * *scale;
                GainSpec::MatrixK { k: matrix_rows(&inv) }
            }
        };
        Ok(Self { table, transitions, p, gain })
    }
}

pub fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect()).collect()
}

pub fn rows_matrix(rows: &[Vec<f64>]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), rows.len(), |i, j| rows[i][j])
}

/// Stream of replication `stream_id` under the experiment seed.
pub fn simulate(exp: &Experiment, cycles: usize, stream_id: u64) -> Result<Vec<Record>> {
    let mut rng = RngStream::new(exp.config.run.seed, stream_id);
    Ok(generate_stream(&exp.model, &exp.theta_star, &exp.grid, exp.x0(), cycles, &exp.paths, &mut rng)?)
}

/// Outcome of one check requested by the configuration or built into a command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Self { name: name.into(), passed, detail: detail.into() }
    }
}

pub fn all_passed(checks: &[Check]) -> bool {
    checks.iter().all(|c| c.passed)
}
