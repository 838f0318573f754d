//! Euler-Maruyama sampling of the grid-hit / neighborhood-exit observation stream.
//!
//! Every cycle starts exactly on a grid point `d`, runs until the path leaves
//! `U_d` (recording the exit endpoint and the elapsed time), and then continues
//! until it reaches a grid point other than `d`. Only those stopping times and
//! states are kept.
//!
//! Outside the hull of the neighborhoods the path never produces an
//! observation, so the step there grows with the distance to the hull (up to
//! `100 dt`); inside the hull every step is exactly `dt`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::ObservationGrid;
use crate::model::ParametricDiffusion;
use crate::scalar::{lit, Real};

const FAR_FIELD_FRACTION: f64 = 0.2;
const FAR_FIELD_CAP: f64 = 100.0;
const BISECTION_DEPTH: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CrossingRefinement {
    #[default]
    LinearInterpolation,
    /// Brownian-bridge midpoints inside the crossing step before interpolating.
    BisectionSubstep,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathConfig<T> {
    pub dt: T,
    pub crossing_refinement: CrossingRefinement,
    pub bridge_correction: bool,
    /// Abort threshold for a single excursion.
    pub max_path_time: T,
    /// Larger steps away from the hull of the neighborhoods.
    pub far_field_steps: bool,
}

impl<T: Real> Default for PathConfig<T> {
    fn default() -> Self {
        Self::with_dt(lit(1e-4))
    }
}

impl<T: Real> PathConfig<T> {
    pub fn with_dt(dt: T) -> Self {
        Self {
            dt,
            crossing_refinement: CrossingRefinement::LinearInterpolation,
            bridge_correction: true,
            max_path_time: dt * lit::<T>(1e6),
            far_field_steps: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > T::zero() && self.dt.is_finite()) {
            return Err(Error::InvalidConfig(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.max_path_time > self.dt) {
            return Err(Error::InvalidConfig("max_path_time must exceed dt".into()));
        }
        Ok(())
    }
}

/// One sampling cycle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObservationRecord<T> {
    pub n: usize,
    pub grid_point: T,
    pub exit_point: T,
    pub exit_elapsed: T,
    pub next_grid_point: T,
}

/// Seeded ChaCha8 generator on an independent substream.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream_id);
        Self { seed, stream_id, rng }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    pub fn normal<T: Real>(&mut self) -> T {
        lit(self.rng.sample::<f64, _>(StandardNormal))
    }

    /// Uniform on `[0, 1)`.
    pub fn uniform<T: Real>(&mut self) -> T {
        lit(self.rng.random::<f64>())
    }
}

/// `x + b dt + sqrt(σ² dt) z`, coefficients evaluated at `x` clamped into the closed state space.
pub fn euler_step<T: Real>(model: &ParametricDiffusion<T>, theta: &[T], x: T, dt: T, z: T) -> Result<T> {
    let (b, s2) = coefficients(model, theta, x);
    let y = x + b * dt + (s2 * dt).sqrt() * z;
    if !y.is_finite() {
        return Err(Error::NonFinite(format!("Euler step from x = {x}")));
    }
    Ok(y)
}

fn coefficients<T: Real>(model: &ParametricDiffusion<T>, theta: &[T], x: T) -> (T, T) {
    let xc = model.state_space().clamp(x);
    let b = model.drift(xc, theta);
    let s2 = model.diffusion_sq(xc, theta).max(T::zero());
    (b, s2)
}

/// Probability that a Brownian bridge from `a` to `b` over `dt` touches `level`.
fn bridge_probability<T: Real>(a: T, b: T, level: T, s2: T, dt: T) -> T {
    let prod = (a - level) * (b - level);
    if prod <= T::zero() {
        return T::one();
    }
    if s2 <= T::zero() {
        return T::zero();
    }
    (lit::<T>(-2.0) * prod / (s2 * dt)).exp()
}

struct Stepper<'a, T> {
    model: &'a ParametricDiffusion<T>,
    theta: &'a [T],
    cfg: &'a PathConfig<T>,
    hull: (T, T),
}

/// Where and when a step first reached a level.
struct Crossing<T> {
    level: T,
    time: T,
    /// Rest of the step after the crossing, as (end state, remaining time).
    carry: Option<(T, T)>,
}

impl<'a, T: Real> Stepper<'a, T> {
    fn new(model: &'a ParametricDiffusion<T>, theta: &'a [T], grid: &ObservationGrid<T>, cfg: &'a PathConfig<T>) -> Self {
        let hoods = grid.neighborhoods();
        let lo = hoods.iter().map(|u| u.left).fold(T::infinity(), T::min);
        let hi = hoods.iter().map(|u| u.right).fold(T::neg_infinity(), T::max);
        Self { model, theta, cfg, hull: (lo, hi) }
    }

    fn step_size(&self, x: T, b: T, s2: T) -> T {
        let dt = self.cfg.dt;
        if !self.cfg.far_field_steps {
            return dt;
        }
        let reach = if x < self.hull.0 {
            self.hull.0 - x
        } else if x > self.hull.1 {
            x - self.hull.1
        } else {
            return dt;
        };
        let kappa = lit::<T>(FAR_FIELD_FRACTION);
        let room = reach.min(self.model.state_space().distance_to_boundary(x));
        let mut h = dt * lit::<T>(FAR_FIELD_CAP);
        if s2 > T::zero() {
            h = h.min(kappa * kappa * room * room / s2);
        }
        if b != T::zero() {
            h = h.min(kappa * room / b.abs());
        }
        h.max(dt)
    }

    /// Fraction of the step at which the path `a -> b` first reaches `level`.
    fn crossing_fraction(&self, a: T, b: T, level: T, s2: T, h: T, rng: &mut RngStream) -> T {
        match self.cfg.crossing_refinement {
            CrossingRefinement::LinearInterpolation => ((a - level) / (a - b)).max(T::zero()).min(T::one()),
            CrossingRefinement::BisectionSubstep => {
                let (mut a, mut b) = (a, b);
                let (mut start, mut len) = (T::zero(), T::one());
                let half = lit::<T>(0.5);
                for _ in 0..BISECTION_DEPTH {
                    let sd = (s2 * h * len * lit::<T>(0.25)).sqrt();
                    let m = (a + b) * half + sd * rng.normal::<T>();
                    len = len * half;
                    if (a - level) * (m - level) <= T::zero() {
                        b = m;
                    } else {
                        a = m;
                        start += len;
                    }
                }
                start + len * ((a - level) / (a - b)).max(T::zero()).min(T::one())
            }
        }
    }

    /// Runs from `x` at time zero until the path reaches `lower` or `upper`.
    fn run_until(&self, x0: T, lower: Option<T>, upper: Option<T>, rng: &mut RngStream) -> Result<Crossing<T>> {
        let mut x = x0;
        let mut t = T::zero();
        loop {
            if t > self.cfg.max_path_time {
                return Err(Error::PathTimeExceeded { limit: self.cfg.max_path_time.as_f64() });
            }
            let (b, s2) = coefficients(self.model, self.theta, x);
            let h = self.step_size(x, b, s2);
            let z = rng.normal::<T>();
            let y = x + b * h + (s2 * h).sqrt() * z;
            if !y.is_finite() {
                return Err(Error::NonFinite(format!("Euler step from x = {x}")));
            }
            // both levels can only be crossed in one step if the step jumps the
            // whole interval; the one nearer the start comes first
            let hit = match (lower, upper) {
                (Some(l), _) if y <= l => Some(l),
                (_, Some(u)) if y >= u => Some(u),
                _ => None,
            };
            if let Some(level) = hit {
                let f = self.crossing_fraction(x, y, level, s2, h, rng);
                let rest = (T::one() - f) * h;
                return Ok(Crossing { level, time: t + f * h, carry: Some((y, rest)) });
            }
            if self.cfg.bridge_correction {
                let pl = lower.map_or(T::zero(), |l| bridge_probability(x, y, l, s2, h));
                let pu = upper.map_or(T::zero(), |u| bridge_probability(x, y, u, s2, h));
                if pl > T::zero() || pu > T::zero() {
                    let (first, p_first, second, p_second) =
                        if pl >= pu { (lower, pl, upper, pu) } else { (upper, pu, lower, pl) };
                    let mid = t + h * lit::<T>(0.5);
                    if rng.uniform::<T>() < p_first {
                        return Ok(Crossing { level: first.unwrap(), time: mid, carry: None });
                    }
                    if p_second > T::zero() && rng.uniform::<T>() < p_second {
                        return Ok(Crossing { level: second.unwrap(), time: mid, carry: None });
                    }
                }
            }
            x = y;
            t += h;
        }
    }
}

fn neighbors<T: Real>(grid: &ObservationGrid<T>, i: usize) -> (Option<T>, Option<T>) {
    let lower = if i > 0 { Some(grid.point(i - 1)) } else { None };
    let upper = if i + 1 < grid.len() { Some(grid.point(i + 1)) } else { None };
    (lower, upper)
}

fn check_setup<T: Real>(model: &ParametricDiffusion<T>, theta: &[T], grid: &ObservationGrid<T>, cfg: &PathConfig<T>) -> Result<()> {
    cfg.validate()?;
    model.check_parameters(theta)?;
    let v = grid.validate(model);
    if !v.is_empty() {
        return Err(Error::InvalidGrid(v));
    }
    if grid.len() < 2 {
        return Err(Error::InvalidConfig("the observation grid needs at least two points".into()));
    }
    Ok(())
}

/// Time to reach the grid from `x0` and the point reached; `(0, x0)` if `x0` is on the grid.
pub fn first_hit_grid<T: Real>(
    model: &ParametricDiffusion<T>,
    theta: &[T],
    x0: T,
    grid: &ObservationGrid<T>,
    cfg: &PathConfig<T>,
    rng: &mut RngStream,
) -> Result<(T, T)> {
    cfg.validate()?;
    if grid.points().contains(&x0) {
        return Ok((T::zero(), x0));
    }
    if !model.state_space().in_interior(x0) {
        return Err(Error::Domain { x: x0.as_f64() });
    }
    let lower = grid.points().iter().copied().filter(|&d| d < x0).fold(None, |m: Option<T>, d| Some(m.map_or(d, |v| v.max(d))));
    let upper = grid.points().iter().copied().filter(|&d| d > x0).fold(None, |m: Option<T>, d| Some(m.map_or(d, |v| v.min(d))));
    let st = Stepper::new(model, theta, grid, cfg);
    let c = st.run_until(x0, lower, upper, rng)?;
    Ok((c.time, c.level))
}

fn cycle<T: Real>(st: &Stepper<'_, T>, grid: &ObservationGrid<T>, i: usize, rng: &mut RngStream) -> Result<ObservationRecord<T>> {
    let d = grid.point(i);
    let u = grid.neighborhood(i);
    let exit = st.run_until(d, Some(u.left), Some(u.right), rng)?;
    let (lower, upper) = neighbors(grid, i);
    let mut start = exit.level;
    let mut next = None;
    if let Some((y, _)) = exit.carry {
        match (lower, upper) {
            (Some(l), _) if y <= l => next = Some(l),
            (_, Some(r)) if y >= r => next = Some(r),
            _ => start = y,
        }
    }
    let next = match next {
        Some(n) => n,
        None => st.run_until(start, lower, upper, rng)?.level,
    };
    Ok(ObservationRecord { n: 0, grid_point: d, exit_point: exit.level, exit_elapsed: exit.time, next_grid_point: next })
}

/// One cycle started on grid point `d`; the returned record has `n = 0`.
pub fn run_cycle<T: Real>(
    model: &ParametricDiffusion<T>,
    theta: &[T],
    d: T,
    grid: &ObservationGrid<T>,
    cfg: &PathConfig<T>,
    rng: &mut RngStream,
) -> Result<ObservationRecord<T>> {
    check_setup(model, theta, grid, cfg)?;
    let i = grid.index_of(d)?;
    cycle(&Stepper::new(model, theta, grid, cfg), grid, i, rng)
}

/// `n_cycles` chained cycles, the first starting where the path from `x0` first meets the grid.
pub fn generate_stream<T: Real>(
    model: &ParametricDiffusion<T>,
    theta: &[T],
    grid: &ObservationGrid<T>,
    x0: T,
    n_cycles: usize,
    cfg: &PathConfig<T>,
    rng: &mut RngStream,
) -> Result<Vec<ObservationRecord<T>>> {
    check_setup(model, theta, grid, cfg)?;
    if n_cycles == 0 {
        return Err(Error::InvalidConfig("n_cycles must be at least 1".into()));
    }
    let (_, mut d) = first_hit_grid(model, theta, x0, grid, cfg, rng)?;
    let st = Stepper::new(model, theta, grid, cfg);
    let mut out = Vec::with_capacity(n_cycles);
    let mut i = grid.index_of(d)?;
    for n in 1..=n_cycles {
        let mut rec = cycle(&st, grid, i, rng)?;
        rec.n = n;
        d = rec.next_grid_point;
        i = grid.index_of(d)?;
        out.push(rec);
    }
    Ok(out)
}
