//! Robbins-Monro recursions driven by the observation stream.
//!
//! * value / time: `Θ_{n+1} = Π[Θ_n - γ_n H (Y_{n+1} - η(Θ_n, X_{τ_n}))]`
//! * projected vector: `Θ_{n+1} = Π[Θ_n + γ_n K ∇η(Θ_n, X_{τ_n}) (Y_{n+1} - η(Θ_n, X_{τ_n}))]`
//! * normalized: `Θ_{n+1} = Θ_n - (Y_{n+1} - η(Θ_n, X_{τ_n})) / (n α(X_{τ_n}))` with `α` taken at the truth
//!
//! With the residual `Y - η`, the recursion moves towards the root only if
//! `H` has the sign opposite to `∂η/∂θ`. Since `η` increases with `b/σ²`, the
//! ratio-sign gain is `H = -sign(∂(b/σ²)/∂θ)`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::ObservationGrid;
use crate::interp::TensorChebyshev;
use crate::model::{fd_step, ParametricDiffusion};
use crate::moments::{response_mean, MomentTable, Response};
use crate::quadrature::QuadratureConfig;
use crate::scalar::{lit, Real};
use crate::simulator::ObservationRecord;
use crate::space::ParameterSpace;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case", deny_unknown_fields)]
pub enum StepSchedule<T> {
    /// `a / (n + b)`.
    AOverNPlusB { a: T, b: T },
    /// `a / n^power`.
    AOverNPow { a: T, power: T },
}

impl<T: Real> Default for StepSchedule<T> {
    fn default() -> Self {
        StepSchedule::AOverNPlusB { a: T::one(), b: lit(10.0) }
    }
}

impl<T: Real> StepSchedule<T> {
    /// The `1/n` schedule of the normalized recursion.
    pub fn harmonic() -> Self {
        StepSchedule::AOverNPow { a: T::one(), power: T::one() }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            StepSchedule::AOverNPlusB { a, b } if a > T::zero() && b >= T::zero() => Ok(()),
            StepSchedule::AOverNPow { a, power } if a > T::zero() && power > lit(0.5) && power <= T::one() => Ok(()),
            _ => Err(Error::InvalidConfig(format!("step schedule {self:?} violates a > 0, b >= 0, power in (0.5, 1]"))),
        }
    }

    /// `γ_n` for `n >= 1`.
    pub fn gamma(&self, n: usize) -> T {
        let n = lit::<T>(n as f64);
        match *self {
            StepSchedule::AOverNPlusB { a, b } => a / (n + b),
            StepSchedule::AOverNPow { a, power } => a / n.powf(power),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GainSpec<T> {
    ConstantSign { sign: T },
    RatioSign,
    /// `H(d) = 1 / α(d)` from a table.
    TableAlpha,
    /// Row-major `s x s` matrix.
    #[serde(rename = "matrix_K", alias = "matrix_k")]
    MatrixK { k: Vec<Vec<T>> },
}

impl<T: Real> GainSpec<T> {
    pub fn validate(&self, dimension: usize) -> Result<()> {
        match self {
            GainSpec::ConstantSign { sign } if *sign == T::one() || *sign == -T::one() => Ok(()),
            GainSpec::ConstantSign { sign } => Err(Error::InvalidConfig(format!("gain sign must be +1 or -1, got {sign}"))),
            GainSpec::RatioSign | GainSpec::TableAlpha => {
                if dimension == 1 {
                    Ok(())
                } else {
                    Err(Error::InvalidConfig("scalar gains need a one-dimensional parameter".into()))
                }
            }
            GainSpec::MatrixK { k } => {
                if k.len() != dimension || k.iter().any(|r| r.len() != dimension) {
                    return Err(Error::DimensionMismatch { expected: dimension, got: k.len() });
                }
                let m = to_dmatrix(k);
                if m.iter().any(|v| !v.is_finite()) || m.lu().determinant().abs() < 1e-14 {
                    return Err(Error::SingularMatrix);
                }
                Ok(())
            }
        }
    }
}

pub(crate) fn to_dmatrix<T: Real>(k: &[Vec<T>]) -> DMatrix<f64> {
    DMatrix::from_fn(k.len(), k.len(), |i, j| k[i][j].as_f64())
}

/// Fixes the coordinates that are not estimated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterEmbedding<T> {
    pub base: Vec<T>,
    pub coordinates: Vec<usize>,
}

impl<T: Real> ParameterEmbedding<T> {
    pub fn new(base: Vec<T>, coordinates: Vec<usize>) -> Result<Self> {
        if coordinates.is_empty() || coordinates.iter().any(|&c| c >= base.len()) {
            return Err(Error::InvalidConfig(format!("estimated coordinates {coordinates:?} out of range")));
        }
        let mut seen = coordinates.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != coordinates.len() {
            return Err(Error::InvalidConfig("estimated coordinates repeat".into()));
        }
        Ok(Self { base, coordinates })
    }

    pub fn full(base: Vec<T>) -> Self {
        let coordinates = (0..base.len()).collect();
        Self { base, coordinates }
    }

    pub fn dimension(&self) -> usize {
        self.coordinates.len()
    }

    pub fn embed(&self, estimated: &[T]) -> Vec<T> {
        let mut th = self.base.clone();
        for (&c, &v) in self.coordinates.iter().zip(estimated) {
            th[c] = v;
        }
        th
    }

    pub fn restrict(&self, full: &[T]) -> Vec<T> {
        self.coordinates.iter().map(|&c| full[c]).collect()
    }
}

/// Source of `η(θ, d)` and `∇η(θ, d)` at the current iterate, over the estimated coordinates.
pub trait MomentProvider<T: Real> {
    fn response(&self) -> &Response<T>;
    fn grid(&self) -> &ObservationGrid<T>;
    fn model(&self) -> &ParametricDiffusion<T>;
    fn embedding(&self) -> &ParameterEmbedding<T>;
    fn eta(&mut self, theta: &[T], point: usize) -> Result<T>;
    fn eta_gradient(&mut self, theta: &[T], point: usize) -> Result<(T, Vec<T>)>;
}

/// Fresh quadrature for every request.
#[derive(Clone)]
pub struct DirectMoments<T> {
    model: ParametricDiffusion<T>,
    grid: ObservationGrid<T>,
    embedding: ParameterEmbedding<T>,
    response: Response<T>,
    quad: QuadratureConfig<T>,
}

impl<T: Real> DirectMoments<T> {
    pub fn new(
        model: ParametricDiffusion<T>,
        grid: ObservationGrid<T>,
        embedding: ParameterEmbedding<T>,
        response: Response<T>,
        quad: QuadratureConfig<T>,
    ) -> Result<Self> {
        quad.validate()?;
        model.check_parameters(&embedding.base)?;
        let v = grid.validate(&model);
        if !v.is_empty() {
            return Err(Error::InvalidGrid(v));
        }
        Ok(Self { model, grid, embedding, response, quad })
    }

    fn mean_full(&self, theta_full: &[T], point: usize) -> Result<T> {
        let u = self.grid.neighborhood(point);
        response_mean(&self.model, theta_full, u, self.grid.point(point), &self.response, &self.quad)
    }
}

impl<T: Real> MomentProvider<T> for DirectMoments<T> {
    fn response(&self) -> &Response<T> {
        &self.response
    }
    fn grid(&self) -> &ObservationGrid<T> {
        &self.grid
    }
    fn model(&self) -> &ParametricDiffusion<T> {
        &self.model
    }
    fn embedding(&self) -> &ParameterEmbedding<T> {
        &self.embedding
    }

    fn eta(&mut self, theta: &[T], point: usize) -> Result<T> {
        self.mean_full(&self.embedding.embed(theta), point)
    }

    fn eta_gradient(&mut self, theta: &[T], point: usize) -> Result<(T, Vec<T>)> {
        let value = self.eta(theta, point)?;
        let mut grad = Vec::with_capacity(theta.len());
        for i in 0..theta.len() {
            let h = fd_step(theta[i]);
            let mut up = theta.to_vec();
            let mut dn = theta.to_vec();
            up[i] += h;
            dn[i] -= h;
            grad.push((self.eta(&up, point)? - self.eta(&dn, point)?) / (h + h));
        }
        Ok((value, grad))
    }
}

/// Per grid point polynomial interpolant of `θ -> η(θ, d)` on a box of half-width
/// `trust_radius` around the point where it was last built; rebuilt by fresh
/// quadrature whenever the iterate leaves the box.
#[derive(Clone)]
pub struct CachedMoments<T> {
    direct: DirectMoments<T>,
    trust_radius: T,
    nodes: usize,
    cache: Vec<Option<TensorChebyshev<T>>>,
    rebuilds: usize,
}

impl<T: Real> CachedMoments<T> {
    pub fn new(direct: DirectMoments<T>, trust_radius: T) -> Result<Self> {
        if !(trust_radius > T::zero()) {
            return Err(Error::InvalidConfig("trust radius must be positive".into()));
        }
        let nodes = match direct.embedding.dimension() {
            1 => 9,
            2 => 7,
            _ => 5,
        };
        let n = direct.grid.len();
        Ok(Self { direct, trust_radius, nodes, cache: vec![None; n], rebuilds: 0 })
    }

    pub fn rebuilds(&self) -> usize {
        self.rebuilds
    }

    fn surface(&mut self, theta: &[T], point: usize) -> Result<&TensorChebyshev<T>> {
        let fresh = self.cache[point].as_ref().is_some_and(|c| c.contains(theta));
        if !fresh {
            let lower: Vec<T> = theta.iter().map(|&t| t - self.trust_radius).collect();
            let upper: Vec<T> = theta.iter().map(|&t| t + self.trust_radius).collect();
            let direct = &self.direct;
            let built = TensorChebyshev::build(&lower, &upper, self.nodes, |x| {
                direct.mean_full(&direct.embedding.embed(x), point)
            })?;
            self.cache[point] = Some(built);
            self.rebuilds += 1;
        }
        Ok(self.cache[point].as_ref().expect("cache filled above"))
    }
}

impl<T: Real> MomentProvider<T> for CachedMoments<T> {
    fn response(&self) -> &Response<T> {
        &self.direct.response
    }
    fn grid(&self) -> &ObservationGrid<T> {
        &self.direct.grid
    }
    fn model(&self) -> &ParametricDiffusion<T> {
        &self.direct.model
    }
    fn embedding(&self) -> &ParameterEmbedding<T> {
        &self.direct.embedding
    }

    fn eta(&mut self, theta: &[T], point: usize) -> Result<T> {
        Ok(self.surface(theta, point)?.eval(theta).0)
    }

    fn eta_gradient(&mut self, theta: &[T], point: usize) -> Result<(T, Vec<T>)> {
        Ok(self.surface(theta, point)?.eval(theta))
    }
}

/// `sign(∂(b/σ²)/∂θ_coordinate)` at `d`; a derivative below `1e-12` is an error.
pub fn ratio_sign_gain<T: Real>(model: &ParametricDiffusion<T>, theta: &[T], d: T, coordinate: usize) -> Result<T> {
    let v = model.ratio_partial(d, theta, coordinate)?;
    if v.abs() < lit(1e-12) {
        return Err(Error::VanishingDerivative { x: d.as_f64(), value: v.as_f64() });
    }
    Ok(v.signum())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow<T> {
    pub n: usize,
    pub theta: Vec<T>,
    pub gamma: T,
    pub innovation: T,
}

/// Outcome of one update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepInfo<T> {
    pub n: usize,
    pub gamma: T,
    pub innovation: T,
    pub skipped: bool,
}

#[derive(Debug, Clone)]
pub struct EstimatorState<T> {
    theta: Vec<T>,
    n: usize,
    schedule: StepSchedule<T>,
    gain: GainSpec<T>,
    space: ParameterSpace<T>,
    alpha: Option<Vec<T>>,
    skipped: usize,
    trajectory: Option<(usize, Vec<TrajectoryRow<T>>)>,
    burn_in: usize,
    seen: usize,
}

impl<T: Real> EstimatorState<T> {
    pub fn new(theta0: Vec<T>, schedule: StepSchedule<T>, gain: GainSpec<T>, space: ParameterSpace<T>) -> Result<Self> {
        schedule.validate()?;
        gain.validate(space.dimension())?;
        let theta = space.project(&theta0)?;
        if matches!(gain, GainSpec::TableAlpha) {
            return Err(Error::InvalidConfig("table gains need a moment table; use with_table".into()));
        }
        Ok(Self {
            theta,
            n: 0,
            schedule,
            gain,
            space,
            alpha: None,
            skipped: 0,
            trajectory: None,
            burn_in: 0,
            seen: 0,
        })
    }

    /// The normalized recursion: `γ_n = 1/n`, `H(d) = 1/α(d)` from `table`, no projection.
    pub fn normalized(theta0: T, table: &MomentTable<T>, response: &Response<T>, burn_in: usize) -> Result<Self> {
        let mut alpha = Vec::with_capacity(table.points.len());
        for i in 0..table.points.len() {
            let (_, _, a) = table.response_at(i, response)?;
            if a.len() != 1 {
                return Err(Error::DimensionMismatch { expected: 1, got: a.len() });
            }
            if a[0] == T::zero() || !a[0].is_finite() {
                return Err(Error::ZeroAlpha { d: table.points[i].d.as_f64() });
            }
            alpha.push(a[0]);
        }
        Ok(Self {
            theta: vec![theta0],
            n: 0,
            schedule: StepSchedule::harmonic(),
            gain: GainSpec::TableAlpha,
            space: ParameterSpace::unconstrained(1)?,
            alpha: Some(alpha),
            skipped: 0,
            trajectory: None,
            burn_in,
            seen: 0,
        })
    }

    /// Records every `stride`-th iterate.
    pub fn with_trajectory(mut self, stride: usize) -> Self {
        self.trajectory = Some((stride.max(1), Vec::new()));
        self
    }

    pub fn theta(&self) -> &[T] {
        &self.theta
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn skipped(&self) -> usize {
        self.skipped
    }

    pub fn skip_fraction(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            self.skipped as f64 / self.n as f64
        }
    }

    pub fn space(&self) -> &ParameterSpace<T> {
        &self.space
    }

    pub fn schedule(&self) -> &StepSchedule<T> {
        &self.schedule
    }

    pub fn gain(&self) -> &GainSpec<T> {
        &self.gain
    }

    pub fn trajectory(&self) -> &[TrajectoryRow<T>] {
        self.trajectory.as_ref().map_or(&[], |(_, rows)| rows.as_slice())
    }

    fn record(&mut self, gamma: T, innovation: T) {
        let n = self.n;
        let theta = self.theta.clone();
        if let Some((stride, rows)) = self.trajectory.as_mut() {
            if n % *stride == 0 || n == 1 {
                rows.push(TrajectoryRow { n, theta, gamma, innovation });
            }
        }
    }

    /// `next` is the proposed iterate, or the moment failure that skips this update.
    fn finish(&mut self, next: Result<(Vec<T>, T, T)>) -> Result<StepInfo<T>> {
        self.n += 1;
        match next {
            Ok((theta, gamma, innovation)) => {
                let theta = self.space.project(&theta)?;
                if theta.iter().any(|t| !t.is_finite()) {
                    self.skipped += 1;
                    return Ok(StepInfo { n: self.n, gamma, innovation, skipped: true });
                }
                self.theta = theta;
                self.record(gamma, innovation);
                Ok(StepInfo { n: self.n, gamma, innovation, skipped: false })
            }
            Err(_) => {
                self.skipped += 1;
                let gamma = self.schedule.gamma(self.n);
                Ok(StepInfo { n: self.n, gamma, innovation: T::nan(), skipped: true })
            }
        }
    }

    fn scalar_step<P: MomentProvider<T>>(
        &self,
        rec: &ObservationRecord<T>,
        moments: &mut P,
    ) -> Result<Result<(Vec<T>, T, T)>> {
        let i = moments.grid().index_of(rec.grid_point)?;
        let y = moments.response().observe(rec.exit_point, rec.exit_elapsed);
        let gamma = self.schedule.gamma(self.n + 1);
        let h = match &self.gain {
            GainSpec::ConstantSign { sign } => *sign,
            GainSpec::RatioSign => {
                let emb = moments.embedding();
                let full = emb.embed(&self.theta);
                -ratio_sign_gain(moments.model(), &full, rec.grid_point, emb.coordinates[0])?
            }
            GainSpec::TableAlpha => T::one() / self.alpha.as_ref().expect("table gain carries alpha")[i],
            GainSpec::MatrixK { .. } => {
                return Err(Error::InvalidConfig("matrix gain needs the projected vector update".into()))
            }
        };
        Ok(moments.eta(&self.theta, i).map(|eta| {
            let innovation = y - eta;
            let theta = self.theta.iter().map(|&t| t - gamma * h * innovation).collect();
            (theta, gamma, innovation)
        }))
    }

    fn check_provider<P: MomentProvider<T>>(&self, moments: &P) -> Result<()> {
        if moments.embedding().dimension() != self.theta.len() {
            return Err(Error::DimensionMismatch { expected: self.theta.len(), got: moments.embedding().dimension() });
        }
        Ok(())
    }

    /// Update from the exit value `f(X_ν)`.
    pub fn update_value<P: MomentProvider<T>>(&mut self, rec: &ObservationRecord<T>, moments: &mut P) -> Result<StepInfo<T>> {
        self.check_provider(moments)?;
        if !matches!(moments.response(), Response::Value { .. }) {
            return Err(Error::InvalidConfig("value update needs a value response".into()));
        }
        let next = self.scalar_step(rec, moments)?;
        self.finish(next)
    }

    /// Update from the exit time `g(ν - τ)`.
    pub fn update_time<P: MomentProvider<T>>(&mut self, rec: &ObservationRecord<T>, moments: &mut P) -> Result<StepInfo<T>> {
        self.check_provider(moments)?;
        if !matches!(moments.response(), Response::Time { .. }) {
            return Err(Error::InvalidConfig("time update needs a time response".into()));
        }
        let next = self.scalar_step(rec, moments)?;
        self.finish(next)
    }

    /// Projected update along `K ∇η`.
    pub fn update_projected_vector<P: MomentProvider<T>>(
        &mut self,
        rec: &ObservationRecord<T>,
        moments: &mut P,
    ) -> Result<StepInfo<T>> {
        self.check_provider(moments)?;
        let k = match &self.gain {
            GainSpec::MatrixK { k } => k.clone(),
            _ => return Err(Error::InvalidConfig("projected vector update needs a matrix gain".into())),
        };
        let i = moments.grid().index_of(rec.grid_point)?;
        let y = moments.response().observe(rec.exit_point, rec.exit_elapsed);
        let gamma = self.schedule.gamma(self.n + 1);
        let next = moments.eta_gradient(&self.theta, i).map(|(eta, grad)| {
            let innovation = y - eta;
            let theta = self
                .theta
                .iter()
                .zip(&k)
                .map(|(&t, row)| {
                    let kg: T = row.iter().zip(&grad).map(|(&a, &b)| a * b).sum();
                    t + gamma * kg * innovation
                })
                .collect();
            (theta, gamma, innovation)
        });
        self.finish(next)
    }

    /// Normalized recursion step; the first `burn_in` records are discarded.
    pub fn update_normalized<P: MomentProvider<T>>(&mut self, rec: &ObservationRecord<T>, moments: &mut P) -> Result<Option<StepInfo<T>>> {
        self.check_provider(moments)?;
        if !matches!(self.gain, GainSpec::TableAlpha) {
            return Err(Error::InvalidConfig("normalized update needs the table gain".into()));
        }
        self.seen += 1;
        if self.seen <= self.burn_in {
            return Ok(None);
        }
        let next = self.scalar_step(rec, moments)?;
        self.finish(next).map(Some)
    }

    /// Dispatches on the gain and response kinds.
    pub fn update<P: MomentProvider<T>>(&mut self, rec: &ObservationRecord<T>, moments: &mut P) -> Result<Option<StepInfo<T>>> {
        match (&self.gain, moments.response()) {
            (GainSpec::TableAlpha, _) => self.update_normalized(rec, moments),
            (GainSpec::MatrixK { .. }, _) => self.update_projected_vector(rec, moments).map(Some),
            (_, Response::Value { .. }) => self.update_value(rec, moments).map(Some),
            (_, Response::Time { .. }) => self.update_time(rec, moments).map(Some),
            (_, Response::Combined { .. }) => {
                self.check_provider(moments)?;
                let next = self.scalar_step(rec, moments)?;
                self.finish(next).map(Some)
            }
        }
    }
}

/// Mean field `ḡ(θ) = -Σ_d p_d (η(θ*, d) - η(θ, d)) ∇η(θ, d)` for the provider's response.
pub fn stationary_residual<T: Real, P: MomentProvider<T>>(
    theta: &[T],
    truth: &MomentTable<T>,
    moments: &mut P,
    p: &[T],
) -> Result<Vec<T>> {
    let s = theta.len();
    let response = *moments.response();
    if p.len() != truth.points.len() {
        return Err(Error::DimensionMismatch { expected: truth.points.len(), got: p.len() });
    }
    let mut g = vec![T::zero(); s];
    for (i, &pd) in p.iter().enumerate() {
        let (eta_star, _, _) = truth.response_at(i, &response)?;
        let (eta, grad) = moments.eta_gradient(theta, i)?;
        let gap = eta_star - eta;
        for k in 0..s {
            g[k] -= pd * gap * grad[k];
        }
    }
    Ok(g)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InjectivityReport {
    pub singular_values: Vec<f64>,
    pub rank: usize,
    pub full_column_rank: bool,
}

/// Rank of the Jacobian `[∂η/∂θ_j(θ*, d_i)]` (rows are grid points).
pub fn jacobian_injectivity(jacobian: &[Vec<f64>]) -> InjectivityReport {
    let rows = jacobian.len();
    let cols = jacobian.first().map_or(0, |r| r.len());
    let m = DMatrix::from_fn(rows, cols, |i, j| jacobian[i][j]);
    let mut sv: Vec<f64> = m.singular_values().iter().copied().collect();
    sv.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    let top = sv.first().copied().unwrap_or(0.0);
    let rank = sv.iter().filter(|&&v| v > top * 1e-8 && v > 0.0).count();
    InjectivityReport { singular_values: sv, rank, full_column_rank: rank == cols && cols > 0 }
}
