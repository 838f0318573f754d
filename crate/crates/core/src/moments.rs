//! Exit moments of a diffusion from an interval `(l, r)`.
//!
//! With `I(y) = ∫_l^y 2b/σ²`, the scale density is `e^{-I}` and the solution of
//! `Lu = -g`, `u(l) = u(r) = 0` is
//!
//! ```text
//! u(x) = p(x) ∫_l^r Q_g - ∫_l^x Q_g,    Q_g(y) = ∫_l^y 2 g(z) e^{I(z) - I(y)} / σ²(z) dz
//! ```
//!
//! where `p` is the right-exit probability. Time moments follow from the
//! cascade `L u_k = -k u_{k-1}`, `u_0 = 1`, and `E_x[τ 1{exit right}]` from the
//! source `g = p`.
//!
//! All inner antiderivatives live on one Chebyshev mesh as cubic Hermite tables.
//! Exponentials are shifted by the extreme values of `I` on the mesh so that no
//! intermediate quantity leaves floating point range.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Neighborhood, ObservationGrid};
use crate::interp::{chebyshev_mesh, HermiteTable};
use crate::model::{fd_step, ParametricDiffusion};
use crate::quadrature::{integrate, QuadratureConfig};
use crate::scalar::{lit, Real};

pub mod closed_form;

/// Function `f` of the exit point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Observable {
    #[default]
    Identity,
    Square,
    Log,
}

impl Observable {
    pub fn apply<T: Real>(self, x: T) -> T {
        match self {
            Observable::Identity => x,
            Observable::Square => x * x,
            Observable::Log => x.ln(),
        }
    }
}

/// Function `g` of the exit time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TimeObservable {
    #[default]
    Identity,
    Square,
}

impl TimeObservable {
    pub fn apply<T: Real>(self, t: T) -> T {
        match self {
            TimeObservable::Identity => t,
            TimeObservable::Square => t * t,
        }
    }

    fn power(self) -> usize {
        match self {
            TimeObservable::Identity => 1,
            TimeObservable::Square => 2,
        }
    }
}

/// Which of the per-interval solutions an [`ExitProblem`] carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Depth {
    /// Highest time moment `E τ^k`.
    pub time_order: usize,
    /// `E[τ 1{exit right}]`.
    pub cross: bool,
}

impl Depth {
    pub const SCALE: Depth = Depth { time_order: 0, cross: false };
    pub const TIME: Depth = Depth { time_order: 1, cross: false };
    pub const SECOND: Depth = Depth { time_order: 2, cross: false };
}

#[derive(Debug, Clone)]
struct Green<T> {
    inner: HermiteTable<T>,
    outer: HermiteTable<T>,
    total: T,
}

/// Exit problem for one interval at one parameter value.
#[derive(Debug, Clone)]
pub struct ExitProblem<T> {
    left: T,
    right: T,
    exponent: HermiteTable<T>,
    i_min: T,
    i_max: T,
    scale: HermiteTable<T>,
    scale_total: T,
    time: Vec<Green<T>>,
    cross: Option<Green<T>>,
    cfg: QuadratureConfig<T>,
}

fn overflow_limit<T: Real>() -> T {
    T::max_value().ln() - lit::<T>(10.0)
}

impl<T: Real> ExitProblem<T> {
    pub fn new(
        model: &ParametricDiffusion<T>,
        theta: &[T],
        left: T,
        right: T,
        depth: Depth,
        cfg: &QuadratureConfig<T>,
    ) -> Result<Self> {
        cfg.validate()?;
        model.check_parameters(theta)?;
        if !(left < right) {
            return Err(Error::InvalidConfig(format!("empty interval ({left}, {right})")));
        }
        for x in [left, right] {
            model.checked_diffusion_sq(x, theta)?;
        }
        let mesh = chebyshev_mesh(left, right, cfg.mesh_size);
        let two = lit::<T>(2.0);
        let exponent = HermiteTable::antiderivative(&mesh, |z| Ok(two * model.ratio(z, theta)?))?;
        let i_min = exponent.min_value();
        let i_max = exponent.max_value();
        let range = i_max - i_min;
        if !range.is_finite() || range > overflow_limit() {
            return Err(Error::Overflow { a: left.as_f64(), b: right.as_f64(), range: range.as_f64() });
        }
        let scale = HermiteTable::antiderivative(&mesh, |y| Ok((i_min - exponent.eval(y)).exp()))?;
        let mut out = Self {
            left,
            right,
            scale_total: scale.last(),
            exponent,
            i_min,
            i_max,
            scale,
            time: Vec::new(),
            cross: None,
            cfg: *cfg,
        };
        for k in 1..=depth.time_order {
            let weight = lit::<T>(k as f64);
            let g = if k == 1 {
                out.green(model, theta, &mesh, |_| T::one())?
            } else {
                let prev = &out.time[k - 2];
                let source = |z: T| weight * out.tabulated(prev, z);
                out.green(model, theta, &mesh, source)?
            };
            out.time.push(g);
        }
        if depth.cross {
            let g = out.green(model, theta, &mesh, |z| out.scale.eval(z) / out.scale_total)?;
            out.cross = Some(g);
        }
        Ok(out)
    }

    fn green<G: Fn(T) -> T>(&self, model: &ParametricDiffusion<T>, theta: &[T], mesh: &[T], source: G) -> Result<Green<T>> {
        let two = lit::<T>(2.0);
        let i_max = self.i_max;
        let inner = HermiteTable::antiderivative(mesh, |z| {
            let s2 = model.checked_diffusion_sq(z, theta)?;
            Ok(two * source(z) * (self.exponent.eval(z) - i_max).exp() / s2)
        })?;
        let q = |y: T| inner.eval(y) * (i_max - self.exponent.eval(y)).exp();
        let outer = HermiteTable::antiderivative(mesh, |y| Ok(q(y)))?;
        let total = integrate(|y| Ok(q(y)), self.left, self.right, &self.cfg)?.value;
        Ok(Green { inner, outer, total })
    }

    /// Mesh-interpolated solution, used as the source of the next problem in the cascade.
    fn tabulated(&self, g: &Green<T>, z: T) -> T {
        let p = self.scale.eval(z) / self.scale_total;
        (p * g.outer.last() - g.outer.eval(z)).max(T::zero())
    }

    fn q(&self, g: &Green<T>, y: T) -> T {
        g.inner.eval(y) * (self.i_max - self.exponent.eval(y)).exp()
    }

    fn check_inside(&self, x: T) -> Result<()> {
        if x < self.left || x > self.right || !x.is_finite() {
            return Err(Error::Domain { x: x.as_f64() });
        }
        Ok(())
    }

    pub fn left(&self) -> T {
        self.left
    }

    pub fn right(&self) -> T {
        self.right
    }

    /// `∫_l^y 2b/σ²` on the mesh.
    pub fn log_density(&self, y: T) -> T {
        self.exponent.eval(y)
    }

    fn scaled_scale(&self, a: T, b: T) -> Result<T> {
        let i_min = self.i_min;
        Ok(integrate(|y| Ok((i_min - self.exponent.eval(y)).exp()), a, b, &self.cfg)?.value)
    }

    /// Scale function anchored at the left end, `s(x) = ∫_l^x e^{-I}`.
    pub fn scale(&self, x: T) -> Result<T> {
        self.check_inside(x)?;
        Ok(self.scaled_scale(self.left, x)? * (-self.i_min).exp())
    }

    /// Probability of leaving through the right end when started at `x`.
    pub fn prob_right(&self, x: T) -> Result<T> {
        self.check_inside(x)?;
        let below = self.scaled_scale(self.left, x)?;
        let above = self.scaled_scale(x, self.right)?;
        Ok(below / (below + above))
    }

    fn solve(&self, g: &Green<T>, x: T) -> Result<T> {
        self.check_inside(x)?;
        let p = self.prob_right(x)?;
        let partial = integrate(|y| Ok(self.q(g, y)), self.left, x, &self.cfg)?.value;
        let u = p * g.total - partial;
        if !u.is_finite() {
            return Err(Error::NonFinite(format!("exit moment at x = {x}")));
        }
        Ok(u)
    }

    /// `E_x τ^k` for `1 <= k <= time_order`.
    pub fn time_moment(&self, k: usize, x: T) -> Result<T> {
        if k == 0 {
            return Ok(T::one());
        }
        let g = self.time.get(k - 1).ok_or_else(|| {
            Error::InvalidConfig(format!("exit problem built without time moment of order {k}"))
        })?;
        self.solve(g, x)
    }

    /// `E_x[τ 1{X_τ = r}]`.
    pub fn cross_moment(&self, x: T) -> Result<T> {
        let g = self
            .cross
            .as_ref()
            .ok_or_else(|| Error::InvalidConfig("exit problem built without cross moment".into()))?;
        self.solve(g, x)
    }
}

/// `s(x) = ∫_c^x exp(-∫_c^y 2b/σ²) dy`; negative for `x < c`.
pub fn scale_function<T: Real>(
    model: &ParametricDiffusion<T>,
    theta: &[T],
    c: T,
    x: T,
    cfg: &QuadratureConfig<T>,
) -> Result<T> {
    if x == c {
        model.checked_diffusion_sq(c, theta)?;
        return Ok(T::zero());
    }
    if x > c {
        return ExitProblem::new(model, theta, c, x, Depth::SCALE, cfg)?.scale(x);
    }
    // anchored at x: s_c(x) = -e^{I_x(c)} ∫_x^c e^{-I_x}
    let pb = ExitProblem::new(model, theta, x, c, Depth::SCALE, cfg)?;
    let shift = pb.log_density(c);
    Ok(-(pb.scale(c)?.ln() + shift).exp())
}

/// Probability that the path started at `x` leaves `(c, d)` through `d`.
pub fn exit_probability_right<T: Real>(
    model: &ParametricDiffusion<T>,
    theta: &[T],
    interval: (T, T),
    x: T,
    cfg: &QuadratureConfig<T>,
) -> Result<T> {
    let pb = ExitProblem::new(model, theta, interval.0, interval.1, Depth::SCALE, cfg)?;
    pb.prob_right(x)
}

/// `E_x τ` for the exit time from `(c, d)`.
pub fn expected_exit_time<T: Real>(
    model: &ParametricDiffusion<T>,
    theta: &[T],
    interval: (T, T),
    x: T,
    cfg: &QuadratureConfig<T>,
) -> Result<T> {
    ExitProblem::new(model, theta, interval.0, interval.1, Depth::TIME, cfg)?.time_moment(1, x)
}

/// `E_x τ²` for the exit time from `(c, d)`.
pub fn exit_time_second_moment<T: Real>(
    model: &ParametricDiffusion<T>,
    theta: &[T],
    interval: (T, T),
    x: T,
    cfg: &QuadratureConfig<T>,
) -> Result<T> {
    ExitProblem::new(model, theta, interval.0, interval.1, Depth::SECOND, cfg)?.time_moment(2, x)
}

fn locate<T: Real>(grid: &ObservationGrid<T>, d: T) -> Result<Neighborhood<T>> {
    Ok(grid.neighborhood(grid.index_of(d)?))
}

/// `η^f(θ, d) = f(D_l) + (f(D_r) - f(D_l)) p`.
pub fn exit_value_moment<T: Real>(
    model: &ParametricDiffusion<T>,
    theta: &[T],
    grid: &ObservationGrid<T>,
    d: T,
    f: Observable,
    cfg: &QuadratureConfig<T>,
) -> Result<T> {
    let u = locate(grid, d)?;
    let p = exit_probability_right(model, theta, (u.left, u.right), d, cfg)?;
    Ok(two_point_mean(f, u, p))
}

/// `p (1 - p) (f(D_r) - f(D_l))²`.
pub fn exit_value_variance<T: Real>(
    model: &ParametricDiffusion<T>,
    theta: &[T],
    grid: &ObservationGrid<T>,
    d: T,
    f: Observable,
    cfg: &QuadratureConfig<T>,
) -> Result<T> {
    let u = locate(grid, d)?;
    let p = exit_probability_right(model, theta, (u.left, u.right), d, cfg)?;
    Ok(two_point_variance(f, u, p))
}

pub fn two_point_mean<T: Real>(f: Observable, u: Neighborhood<T>, p: T) -> T {
    let (fl, fr) = (f.apply(u.left), f.apply(u.right));
    fl + (fr - fl) * p
}

pub fn two_point_variance<T: Real>(f: Observable, u: Neighborhood<T>, p: T) -> T {
    let jump = f.apply(u.right) - f.apply(u.left);
    p * (T::one() - p) * jump * jump
}

/// What an estimator observes at the end of an excursion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Response<T> {
    /// `f(X_ν)`.
    Value { f: Observable },
    /// `g(ν - τ)`.
    Time { g: TimeObservable },
    /// `f(X_ν) + weight (ν - τ)`.
    Combined { f: Observable, weight: T },
}

impl<T: Real> Response<T> {
    pub fn observe(&self, exit_point: T, elapsed: T) -> T {
        match *self {
            Response::Value { f } => f.apply(exit_point),
            Response::Time { g } => g.apply(elapsed),
            Response::Combined { f, weight } => f.apply(exit_point) + weight * elapsed,
        }
    }

    fn mean_depth(&self) -> Depth {
        match *self {
            Response::Value { .. } => Depth::SCALE,
            Response::Time { g } => Depth { time_order: g.power(), cross: false },
            Response::Combined { .. } => Depth::TIME,
        }
    }

    fn variance_depth(&self) -> Depth {
        match *self {
            Response::Value { .. } => Depth::SCALE,
            Response::Time { g } => Depth { time_order: 2 * g.power(), cross: false },
            Response::Combined { .. } => Depth { time_order: 2, cross: true },
        }
    }
}

/// Mean and variance of the response for an excursion started at `d`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResponseMoments<T> {
    pub mean: T,
    pub variance: T,
}

fn response_from_problem<T: Real>(
    pb: &ExitProblem<T>,
    u: Neighborhood<T>,
    d: T,
    response: &Response<T>,
    with_variance: bool,
) -> Result<ResponseMoments<T>> {
    let p = pb.prob_right(d)?;
    let nan = T::nan();
    Ok(match *response {
        Response::Value { f } => ResponseMoments { mean: two_point_mean(f, u, p), variance: two_point_variance(f, u, p) },
        Response::Time { g } => {
            let k = g.power();
            let mean = pb.time_moment(k, d)?;
            let variance = if with_variance { (pb.time_moment(2 * k, d)? - mean * mean).max(T::zero()) } else { nan };
            ResponseMoments { mean, variance }
        }
        Response::Combined { f, weight } => {
            let t1 = pb.time_moment(1, d)?;
            let mean = two_point_mean(f, u, p) + weight * t1;
            let variance = if with_variance {
                let vt = (pb.time_moment(2, d)? - t1 * t1).max(T::zero());
                let jump = f.apply(u.right) - f.apply(u.left);
                let cov = jump * (pb.cross_moment(d)? - p * t1);
                two_point_variance(f, u, p) + weight * weight * vt + lit::<T>(2.0) * weight * cov
            } else {
                nan
            };
            ResponseMoments { mean, variance }
        }
    })
}

/// Mean of the response at grid point `d`.
pub fn response_mean<T: Real>(
    model: &ParametricDiffusion<T>,
    theta: &[T],
    u: Neighborhood<T>,
    d: T,
    response: &Response<T>,
    cfg: &QuadratureConfig<T>,
) -> Result<T> {
    let pb = ExitProblem::new(model, theta, u.left, u.right, response.mean_depth(), cfg)?;
    Ok(response_from_problem(&pb, u, d, response, false)?.mean)
}

pub fn response_moments<T: Real>(
    model: &ParametricDiffusion<T>,
    theta: &[T],
    u: Neighborhood<T>,
    d: T,
    response: &Response<T>,
    cfg: &QuadratureConfig<T>,
) -> Result<ResponseMoments<T>> {
    let pb = ExitProblem::new(model, theta, u.left, u.right, response.variance_depth(), cfg)?;
    response_from_problem(&pb, u, d, response, true)
}

/// `-∂η/∂θ` of the response mean by central differences, `h_i = max(1e-5, 1e-5 |θ_i|)`.
pub fn response_alpha<T: Real>(
    model: &ParametricDiffusion<T>,
    theta: &[T],
    u: Neighborhood<T>,
    d: T,
    response: &Response<T>,
    cfg: &QuadratureConfig<T>,
) -> Result<Vec<T>> {
    let mut out = Vec::with_capacity(theta.len());
    for i in 0..theta.len() {
        let h = fd_step(theta[i]);
        let mut up = theta.to_vec();
        let mut dn = theta.to_vec();
        up[i] += h;
        dn[i] -= h;
        let e_up = response_mean(model, &up, u, d, response, cfg)?;
        let e_dn = response_mean(model, &dn, u, d, response, cfg)?;
        let a = -(e_up - e_dn) / (h + h);
        if !a.is_finite() {
            return Err(Error::NonFinite(format!("difference quotient at d = {d}, coordinate {i}")));
        }
        out.push(a);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Which {
    Value,
    Time,
}

/// `-∂η/∂θ` for the exit value (`f`) or exit time (`g`) moment at grid point `d`.
pub fn eta_derivative<T: Real>(
    model: &ParametricDiffusion<T>,
    theta: &[T],
    grid: &ObservationGrid<T>,
    d: T,
    which: Which,
    f: Observable,
    g: TimeObservable,
    cfg: &QuadratureConfig<T>,
) -> Result<Vec<T>> {
    let u = locate(grid, d)?;
    let response = match which {
        Which::Value => Response::Value { f },
        Which::Time => Response::Time { g },
    };
    response_alpha(model, theta, u, d, &response, cfg)
}

/// Moments at one grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointMoments<T> {
    pub d: T,
    pub left: T,
    pub right: T,
    pub prob_right: T,
    pub eta_value: T,
    pub eta_time: T,
    pub var_value: T,
    pub var_time: T,
    /// Covariance of `f(X_ν)` and `ν - τ`; only filled for `g = identity`.
    pub cov_value_time: Option<T>,
    pub alpha_value: Vec<T>,
    pub alpha_time: Vec<T>,
}

/// Every moment the estimators need, at one parameter value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentTable<T> {
    pub theta: Vec<T>,
    pub f: Observable,
    pub g: TimeObservable,
    pub points: Vec<PointMoments<T>>,
}

impl<T: Real> MomentTable<T> {
    pub fn point(&self, d: T) -> Result<&PointMoments<T>> {
        self.points.iter().find(|p| p.d == d).ok_or(Error::UnknownGridPoint(d.as_f64()))
    }

    pub fn index_of(&self, d: T) -> Result<usize> {
        self.points.iter().position(|p| p.d == d).ok_or(Error::UnknownGridPoint(d.as_f64()))
    }

    /// Mean, variance and `α` of `response` at point index `i`.
    pub fn response_at(&self, i: usize, response: &Response<T>) -> Result<(T, T, Vec<T>)> {
        let p = &self.points[i];
        match *response {
            Response::Value { f } if f == self.f => Ok((p.eta_value, p.var_value, p.alpha_value.clone())),
            Response::Time { g } if g == self.g => Ok((p.eta_time, p.var_time, p.alpha_time.clone())),
            Response::Combined { f, weight } if f == self.f && self.g == TimeObservable::Identity => {
                let cov = p.cov_value_time.ok_or_else(|| Error::InvalidConfig("table lacks covariance".into()))?;
                let mean = p.eta_value + weight * p.eta_time;
                let var = p.var_value + weight * weight * p.var_time + lit::<T>(2.0) * weight * cov;
                let alpha = p.alpha_value.iter().zip(&p.alpha_time).map(|(&a, &b)| a + weight * b).collect();
                Ok((mean, var, alpha))
            }
            _ => Err(Error::InvalidConfig("response does not match the observables of the table".into())),
        }
    }
}

pub fn build_moment_table<T: Real>(
    model: &ParametricDiffusion<T>,
    theta: &[T],
    grid: &ObservationGrid<T>,
    f: Observable,
    g: TimeObservable,
    cfg: &QuadratureConfig<T>,
) -> Result<MomentTable<T>> {
    let violations = grid.validate(model);
    if !violations.is_empty() {
        return Err(Error::InvalidGrid(violations));
    }
    let k = g.power();
    let cross = g == TimeObservable::Identity;
    let depth = Depth { time_order: 2 * k, cross };
    let mut points = Vec::with_capacity(grid.len());
    for (&d, &u) in grid.points().iter().zip(grid.neighborhoods()) {
        let pb = ExitProblem::new(model, theta, u.left, u.right, depth, cfg)?;
        let p = pb.prob_right(d)?;
        let eta_time = pb.time_moment(k, d)?;
        let var_time = (pb.time_moment(2 * k, d)? - eta_time * eta_time).max(T::zero());
        let cov_value_time = if cross {
            let jump = f.apply(u.right) - f.apply(u.left);
            Some(jump * (pb.cross_moment(d)? - p * eta_time))
        } else {
            None
        };
        let alpha_value = response_alpha(model, theta, u, d, &Response::Value { f }, cfg)?;
        let alpha_time = response_alpha(model, theta, u, d, &Response::Time { g }, cfg)?;
        points.push(PointMoments {
            d,
            left: u.left,
            right: u.right,
            prob_right: p,
            eta_value: two_point_mean(f, u, p),
            eta_time,
            var_value: two_point_variance(f, u, p),
            var_time,
            cov_value_time,
            alpha_value,
            alpha_time,
        });
    }
    Ok(MomentTable { theta: theta.to_vec(), f, g, points })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Monotonicity {
    Increasing,
    Decreasing,
    NotMonotone,
    NotApplicable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonotonicityReport<T> {
    pub d: T,
    pub coordinate: usize,
    pub samples: Vec<(T, T)>,
    pub observed: Monotonicity,
    /// Direction implied by the sign of `∂(b/σ²)/∂θ` on the neighborhood.
    pub expected: Monotonicity,
    pub note: Option<String>,
}

impl<T: Real> MonotonicityReport<T> {
    pub fn consistent(&self) -> bool {
        self.expected != Monotonicity::NotApplicable && self.observed == self.expected
    }
}

/// Samples `θ_coordinate -> η^f(θ, d)` on `[lo, hi]`, other coordinates fixed at `base`.
#[allow(clippy::too_many_arguments)]
pub fn monotonicity_scan<T: Real>(
    model: &ParametricDiffusion<T>,
    base: &[T],
    coordinate: usize,
    grid: &ObservationGrid<T>,
    d: T,
    f: Observable,
    range: (T, T),
    n_samples: usize,
    cfg: &QuadratureConfig<T>,
) -> MonotonicityReport<T> {
    let mut report = MonotonicityReport {
        d,
        coordinate,
        samples: Vec::new(),
        observed: Monotonicity::NotApplicable,
        expected: Monotonicity::NotApplicable,
        note: None,
    };
    let u = match locate(grid, d) {
        Ok(u) => u,
        Err(e) => {
            report.note = Some(e.to_string());
            return report;
        }
    };
    let n = n_samples.max(2);
    let thetas: Vec<T> = (0..n)
        .map(|i| range.0 + (range.1 - range.0) * lit::<T>(i as f64) / lit::<T>((n - 1) as f64))
        .collect();
    let probe: Vec<T> = (0..9).map(|j| u.left + u.width() * lit::<T>(j as f64 / 8.0)).collect();
    let mut signs = (false, false);
    for &t in &thetas {
        let mut th = base.to_vec();
        th[coordinate] = t;
        for &x in &probe {
            match model.ratio_partial(x, &th, coordinate) {
                Ok(v) if v > lit::<T>(1e-12) => signs.0 = true,
                Ok(v) if v < lit::<T>(-1e-12) => signs.1 = true,
                Ok(_) => {}
                Err(e) => {
                    report.note = Some(e.to_string());
                    return report;
                }
            }
        }
    }
    report.expected = match signs {
        (true, false) => Monotonicity::Increasing,
        (false, true) => Monotonicity::Decreasing,
        (false, false) => {
            report.note = Some("b/sigma^2 does not depend on the scanned coordinate".into());
            return report;
        }
        (true, true) => {
            report.note = Some("derivative of b/sigma^2 changes sign on the neighborhood".into());
            return report;
        }
    };
    // a rising ratio pushes the path right, so η^f follows the monotonicity of f
    if f == Observable::Square && u.left < T::zero() {
        report.note = Some("f is not monotone on the neighborhood".into());
    }
    for &t in &thetas {
        let mut th = base.to_vec();
        th[coordinate] = t;
        match exit_value_moment(model, &th, grid, d, f, cfg) {
            Ok(e) => report.samples.push((t, e)),
            Err(e) => {
                report.note = Some(e.to_string());
                report.observed = Monotonicity::NotMonotone;
                return report;
            }
        }
    }
    let inc = report.samples.windows(2).all(|w| w[1].1 > w[0].1);
    let dec = report.samples.windows(2).all(|w| w[1].1 < w[0].1);
    report.observed = match (inc, dec) {
        (true, _) => Monotonicity::Increasing,
        (_, true) => Monotonicity::Decreasing,
        _ => Monotonicity::NotMonotone,
    };
    report
}
