//! The embedded chain `X_{τ_n}` on the grid and the asymptotic variance
//! predictions that depend on its stationary law.
//!
//! The chain only moves between neighbouring grid points, so it is periodic
//! with period two. The stationary vector is therefore obtained from a direct
//! solve of `(Aᵀ - I) p = 0` with a normalization row rather than from powers of `A`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::ObservationGrid;
use crate::model::ParametricDiffusion;
use crate::moments::{exit_probability_right, MomentTable, Response, Which};
use crate::quadrature::QuadratureConfig;
use crate::scalar::Real;
use crate::simulator::ObservationRecord;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionMatrix {
    /// Row-major, `entries[i][j] = a_{i,j}`.
    pub entries: Vec<Vec<f64>>,
    /// Raw `i -> j` counts when estimated from a stream.
    pub counts: Option<Vec<Vec<u64>>>,
    /// Rows with no observed departures; they are left at zero.
    pub unvisited: Vec<usize>,
}

impl TransitionMatrix {
    pub fn from_rows(entries: Vec<Vec<f64>>) -> Result<Self> {
        let s = entries.len();
        if entries.iter().any(|r| r.len() != s) {
            return Err(Error::DimensionMismatch { expected: s, got: entries.iter().map(Vec::len).find(|&l| l != s).unwrap_or(s) });
        }
        Ok(Self { entries, counts: None, unvisited: Vec::new() })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i][j]
    }

    pub fn matrix(&self) -> DMatrix<f64> {
        let s = self.len();
        DMatrix::from_fn(s, s, |i, j| self.entries[i][j])
    }

    pub fn from_matrix(m: &DMatrix<f64>) -> Self {
        let entries = (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect()).collect();
        Self { entries, counts: None, unvisited: Vec::new() }
    }

    pub fn mul(&self, other: &TransitionMatrix) -> TransitionMatrix {
        Self::from_matrix(&(self.matrix() * other.matrix()))
    }

    pub fn pow(&self, n: u32) -> TransitionMatrix {
        let m = self.matrix();
        let mut out = DMatrix::identity(self.len(), self.len());
        for _ in 0..n {
            out = &out * &m;
        }
        Self::from_matrix(&out)
    }

    /// Largest `|Σ_j a_{i,j} - 1|` together with the smallest entry.
    pub fn stochastic_defect(&self) -> (f64, f64) {
        let mut row = 0.0_f64;
        let mut min = f64::INFINITY;
        for r in &self.entries {
            row = row.max((r.iter().sum::<f64>() - 1.0).abs());
            min = r.iter().copied().fold(min, f64::min);
        }
        (row, min)
    }

    pub fn is_stochastic(&self, tol: f64) -> bool {
        let (defect, min) = self.stochastic_defect();
        defect <= tol && min >= 0.0
    }

    /// Nonzero entries only at `|i - j| = 1`.
    pub fn is_tridiagonal_off_diagonal(&self) -> bool {
        self.entries.iter().enumerate().all(|(i, r)| r.iter().enumerate().all(|(j, &v)| v == 0.0 || i.abs_diff(j) == 1))
    }
}

fn check_square(a: &TransitionMatrix) -> Result<usize> {
    let s = a.len();
    if s == 0 {
        return Err(Error::InvalidConfig("empty transition matrix".into()));
    }
    Ok(s)
}

/// Row-normalized counts of `grid_point -> next_grid_point`.
pub fn estimate_transition_matrix<T: Real>(stream: &[ObservationRecord<T>], grid: &ObservationGrid<T>) -> Result<TransitionMatrix> {
    if stream.is_empty() {
        return Err(Error::InvalidConfig("empty observation stream".into()));
    }
    let s = grid.len();
    let mut counts = vec![vec![0u64; s]; s];
    for r in stream {
        let i = grid.index_of(r.grid_point)?;
        let j = grid.index_of(r.next_grid_point)?;
        counts[i][j] += 1;
    }
    let mut unvisited = Vec::new();
    let entries = counts
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let total: u64 = row.iter().sum();
            if total == 0 {
                unvisited.push(i);
                vec![0.0; s]
            } else {
                row.iter().map(|&c| c as f64 / total as f64).collect()
            }
        })
        .collect();
    Ok(TransitionMatrix { entries, counts: Some(counts), unvisited })
}

/// `a_{i,i+1}` is the probability of reaching `d_{i+1}` before `d_{i-1}` from `d_i`.
pub fn model_transition_matrix<T: Real>(
    model: &ParametricDiffusion<T>,
    theta: &[T],
    grid: &ObservationGrid<T>,
    quad: &QuadratureConfig<T>,
) -> Result<TransitionMatrix> {
    let violations = grid.validate(model);
    if !violations.is_empty() {
        return Err(Error::InvalidGrid(violations));
    }
    let s = grid.len();
    let d = grid.points();
    let mut entries = vec![vec![0.0; s]; s];
    if s == 1 {
        entries[0][0] = 1.0;
    } else {
        entries[0][1] = 1.0;
        entries[s - 1][s - 2] = 1.0;
        for i in 1..s - 1 {
            let up = exit_probability_right(model, theta, (d[i - 1], d[i + 1]), d[i], quad)?.as_f64();
            entries[i][i + 1] = up;
            entries[i][i - 1] = 1.0 - up;
        }
    }
    Ok(TransitionMatrix { entries, counts: None, unvisited: Vec::new() })
}

/// `a_{i,j} = 0` whenever `i ≡ j (mod 2)`.
pub fn is_type_i(a: &TransitionMatrix) -> bool {
    a.entries.iter().enumerate().all(|(i, r)| r.iter().enumerate().all(|(j, &v)| (i + j) % 2 == 1 || v == 0.0))
}

/// `a_{i,j} = 0` whenever `i ≡ j + 1 (mod 2)`.
pub fn is_type_ii(a: &TransitionMatrix) -> bool {
    a.entries.iter().enumerate().all(|(i, r)| r.iter().enumerate().all(|(j, &v)| (i + j) % 2 == 0 || v == 0.0))
}

fn parity_block(a: &TransitionMatrix, start: usize) -> Result<TransitionMatrix> {
    check_square(a)?;
    if !is_type_ii(a) {
        return Err(Error::NotTypeTwo);
    }
    let idx: Vec<usize> = (start..a.len()).step_by(2).collect();
    let entries = idx.iter().map(|&i| idx.iter().map(|&j| a.entries[i][j]).collect()).collect();
    Ok(TransitionMatrix { entries, counts: None, unvisited: Vec::new() })
}

/// Block on the odd grid indices `1, 3, 5, ...` (counting from one), size `⌈s/2⌉`.
pub fn p_odd(a: &TransitionMatrix) -> Result<TransitionMatrix> {
    parity_block(a, 0)
}

/// Block on the even grid indices `2, 4, ...` (counting from one), size `⌊s/2⌋`.
pub fn p_even(a: &TransitionMatrix) -> Result<TransitionMatrix> {
    parity_block(a, 1)
}

pub fn is_irreducible(a: &TransitionMatrix) -> bool {
    let s = a.len();
    let reach = |transpose: bool| {
        let mut seen = vec![false; s];
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(i) = stack.pop() {
            for j in 0..s {
                let v = if transpose { a.entries[j][i] } else { a.entries[i][j] };
                if v > 0.0 && !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        seen.into_iter().all(|b| b)
    };
    s > 0 && reach(false) && reach(true)
}

/// Left fixed probability vector `p A = p`.
pub fn stationary_vector(a: &TransitionMatrix) -> Result<Vec<f64>> {
    let s = check_square(a)?;
    if !a.unvisited.is_empty() || !is_irreducible(a) {
        return Err(Error::Reducible);
    }
    // (Aᵀ - I) p = 0 with its last row replaced by Σ p = 1
    let mut m = a.matrix().transpose() - DMatrix::identity(s, s);
    let mut rhs = DVector::zeros(s);
    for j in 0..s {
        m[(s - 1, j)] = 1.0;
    }
    rhs[s - 1] = 1.0;
    let p = m.lu().solve(&rhs).ok_or(Error::SingularMatrix)?;
    let total: f64 = p.iter().sum();
    Ok(p.iter().map(|v| v / total).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainStats {
    pub stationary: Vec<f64>,
    pub occupancy: Vec<f64>,
    pub n_transitions: usize,
}

impl ChainStats {
    /// `max_d |occupancy_d - p_d|`.
    pub fn max_deviation(&self) -> f64 {
        self.occupancy.iter().zip(&self.stationary).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }
}

pub fn occupancy<T: Real>(stream: &[ObservationRecord<T>], grid: &ObservationGrid<T>) -> Result<Vec<f64>> {
    let mut counts = vec![0usize; grid.len()];
    for r in stream {
        counts[grid.index_of(r.grid_point)?] += 1;
    }
    let n = stream.len().max(1) as f64;
    Ok(counts.into_iter().map(|c| c as f64 / n).collect())
}

/// Occupancy of the stream against the stationary vector of its estimated transition matrix.
pub fn chain_stats<T: Real>(stream: &[ObservationRecord<T>], grid: &ObservationGrid<T>) -> Result<ChainStats> {
    let a = estimate_transition_matrix(stream, grid)?;
    Ok(ChainStats { stationary: stationary_vector(&a)?, occupancy: occupancy(stream, grid)?, n_transitions: stream.len() })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErgodicAverage {
    pub empirical: f64,
    pub predicted: f64,
}

/// `n⁻¹ Σ h(X_{τ_k})` along the stream and `Σ_d h(d) p_d`.
pub fn ergodic_average<T: Real>(
    stream: &[ObservationRecord<T>],
    grid: &ObservationGrid<T>,
    p: &[f64],
    h: impl Fn(T) -> f64,
) -> Result<ErgodicAverage> {
    if stream.is_empty() {
        return Err(Error::InvalidConfig("empty observation stream".into()));
    }
    if p.len() != grid.len() {
        return Err(Error::DimensionMismatch { expected: grid.len(), got: p.len() });
    }
    let empirical = stream.iter().map(|r| h(r.grid_point)).sum::<f64>() / stream.len() as f64;
    let predicted = grid.points().iter().zip(p).map(|(&d, &pd)| h(d) * pd).sum();
    Ok(ErgodicAverage { empirical, predicted })
}

fn which_response<T: Real>(table: &MomentTable<T>, which: Which) -> Response<T> {
    match which {
        Which::Value => Response::Value { f: table.f },
        Which::Time => Response::Time { g: table.g },
    }
}

/// `σ² = Σ_d p_d var(d) / α(d)²` for a one-dimensional parameter.
pub fn asymptotic_variance_scalar<T: Real>(table: &MomentTable<T>, p: &[f64], which: Which) -> Result<f64> {
    asymptotic_variance_response(table, p, &which_response(table, which))
}

/// As [`asymptotic_variance_scalar`] for an arbitrary response.
pub fn asymptotic_variance_response<T: Real>(table: &MomentTable<T>, p: &[f64], response: &Response<T>) -> Result<f64> {
    if p.len() != table.points.len() {
        return Err(Error::DimensionMismatch { expected: table.points.len(), got: p.len() });
    }
    let mut out = 0.0;
    for (i, &pd) in p.iter().enumerate() {
        let (_, var, alpha) = table.response_at(i, response)?;
        if alpha.len() != 1 {
            return Err(Error::DimensionMismatch { expected: 1, got: alpha.len() });
        }
        let a = alpha[0].as_f64();
        if a == 0.0 || !a.is_finite() {
            return Err(Error::ZeroAlpha { d: table.points[i].d.as_f64() });
        }
        out += pd * var.as_f64() / (a * a);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AsymptoticCovariance {
    /// `Σ_d p_d Var_d(Y) (K_d∇η)(K_d∇η)ᵀ`.
    pub sigma: DMatrix<f64>,
    /// `Σ_d p_d ∇η ∇ηᵀ`.
    pub hessian: DMatrix<f64>,
    /// `B = Σ_d p_d K_d ∇η ∇ηᵀ`, which is `K A` for a constant gain.
    pub drift: DMatrix<f64>,
    /// Solution of `(I/2 - B) X + X (I/2 - B)ᵀ = -Σ`.
    pub stationary_cov: DMatrix<f64>,
    /// Eigenvalues of `B`, as `(re, im)`.
    pub eigenvalues: Vec<(f64, f64)>,
}

fn gradients<T: Real>(table: &MomentTable<T>, p: &[f64], response: &Response<T>) -> Result<Vec<(f64, f64, DVector<f64>)>> {
    if p.len() != table.points.len() {
        return Err(Error::DimensionMismatch { expected: table.points.len(), got: p.len() });
    }
    let s = table.theta.len();
    let mut out = Vec::with_capacity(p.len());
    for (i, &pd) in p.iter().enumerate() {
        let (_, var, alpha) = table.response_at(i, response)?;
        if alpha.len() != s {
            return Err(Error::DimensionMismatch { expected: s, got: alpha.len() });
        }
        out.push((pd, var.as_f64(), DVector::from_iterator(s, alpha.iter().map(|a| -a.as_f64()))));
    }
    Ok(out)
}

/// `Σ_d p_d ∇η ∇ηᵀ` and `Σ_d p_d Var_d(Y) ∇η ∇ηᵀ`.
pub fn information_matrices<T: Real>(
    table: &MomentTable<T>,
    p: &[f64],
    response: &Response<T>,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let s = table.theta.len();
    let mut hess = DMatrix::zeros(s, s);
    let mut noise = DMatrix::zeros(s, s);
    for (pd, var, g) in gradients(table, p, response)? {
        let outer = &g * g.transpose();
        hess += &outer * pd;
        noise += outer * (pd * var);
    }
    Ok((hess, noise))
}

/// Solves `M X + X Mᵀ = C` through the Kronecker form `(I ⊗ M + M ⊗ I) vec X = vec C`.
pub fn solve_lyapunov(m: &DMatrix<f64>, c: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let s = m.nrows();
    let id = DMatrix::<f64>::identity(s, s);
    let op = id.kronecker(m) + m.kronecker(&id);
    let rhs = DVector::from_column_slice(c.as_slice());
    let x = op.lu().solve(&rhs).ok_or(Error::SingularMatrix)?;
    Ok(DMatrix::from_column_slice(s, s, x.as_slice()))
}

/// Limiting covariance of `√n (Θ_n - θ*)` for the projected vector recursion with gain `K`.
pub fn asymptotic_covariance_vector<T: Real>(
    table: &MomentTable<T>,
    p: &[f64],
    response: &Response<T>,
    k: &DMatrix<f64>,
) -> Result<AsymptoticCovariance> {
    asymptotic_covariance_pointwise(table, p, response, &vec![k.clone(); table.points.len()])
}

/// As [`asymptotic_covariance_vector`] with a gain `K_d` that depends on the grid point.
///
/// With `s = 1` and `K_d = 1/α(d)²` this is the normalized recursion, and the
/// result equals [`asymptotic_variance_scalar`].
pub fn asymptotic_covariance_pointwise<T: Real>(
    table: &MomentTable<T>,
    p: &[f64],
    response: &Response<T>,
    gains: &[DMatrix<f64>],
) -> Result<AsymptoticCovariance> {
    let s = table.theta.len();
    if gains.len() != table.points.len() {
        return Err(Error::DimensionMismatch { expected: table.points.len(), got: gains.len() });
    }
    if let Some(k) = gains.iter().find(|k| k.nrows() != s || k.ncols() != s) {
        return Err(Error::DimensionMismatch { expected: s, got: k.nrows() });
    }
    let mut hessian = DMatrix::zeros(s, s);
    let mut drift = DMatrix::zeros(s, s);
    let mut sigma = DMatrix::zeros(s, s);
    for ((pd, var, g), k) in gradients(table, p, response)?.into_iter().zip(gains) {
        let outer = &g * g.transpose();
        drift += k * &outer * pd;
        hessian += outer * pd;
        let kg = k * g;
        sigma += &kg * kg.transpose() * (pd * var);
    }
    let spectrum = hessian.clone().symmetric_eigenvalues();
    if !(spectrum.min() > 1e-12 * spectrum.max()) {
        return Err(Error::NotPositiveDefinite);
    }
    let eigenvalues: Vec<(f64, f64)> = drift.complex_eigenvalues().iter().map(|z| (z.re, z.im)).collect();
    let worst = eigenvalues.iter().map(|z| z.0).fold(f64::INFINITY, f64::min);
    if !(worst > 0.5) {
        return Err(Error::EigenvalueCondition { eigenvalue: worst });
    }
    let m = DMatrix::identity(s, s) * 0.5 - &drift;
    let x = solve_lyapunov(&m, &(-&sigma))?;
    let stationary_cov = (&x + x.transpose()) * 0.5;
    Ok(AsymptoticCovariance { sigma, hessian, drift, stationary_cov, eigenvalues })
}

#[cfg(test)]
mod tests;
