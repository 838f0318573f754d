//! Parametric scalar diffusions `dX = b(X, θ) dt + σ(X, θ) dW`.
//!
//! The built-in interest-rate families are written in the ratio/speed form: a
//! link of the first parameter fixes `b/σ²` up to a known shape `m(x)`, and a
//! link of the second parameter scales the diffusion coefficient.
//!
//! * CEV: `σ² = σ0(ς) x^{2γ}`, `b/σ² = ρ(λ) x^{1-2γ}` (drift `ρ(λ) σ0(ς) x`)
//! * CIR: `σ² = σ0(ς) x`, `b/σ² = ρ(λ) (α - x) / x` (drift `ρ(λ) σ0(ς) (α - x)`)

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{lit, Real};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Endpoint<T> {
    Open(T),
    Closed(T),
    Infinite,
}

impl<T: Real> Endpoint<T> {
    pub fn value(&self) -> Option<T> {
        match *self {
            Endpoint::Open(v) | Endpoint::Closed(v) => Some(v),
            Endpoint::Infinite => None,
        }
    }
}

/// The interval `S` a diffusion lives on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StateSpace<T> {
    pub left: Endpoint<T>,
    pub right: Endpoint<T>,
}

impl<T: Real> StateSpace<T> {
    pub fn real_line() -> Self {
        Self { left: Endpoint::Infinite, right: Endpoint::Infinite }
    }

    pub fn positive() -> Self {
        Self { left: Endpoint::Open(T::zero()), right: Endpoint::Infinite }
    }

    pub fn nonnegative() -> Self {
        Self { left: Endpoint::Closed(T::zero()), right: Endpoint::Infinite }
    }

    pub fn in_interior(&self, x: T) -> bool {
        if !x.is_finite() {
            return false;
        }
        let above = self.left.value().map_or(true, |l| x > l);
        let below = self.right.value().map_or(true, |r| x < r);
        above && below
    }

    /// Clamps into the closure of the state space.
    pub fn clamp(&self, x: T) -> T {
        let mut y = x;
        if let Some(l) = self.left.value() {
            y = y.max(l);
        }
        if let Some(r) = self.right.value() {
            y = y.min(r);
        }
        y
    }

    /// Distance to the nearest finite endpoint (infinity if there is none).
    pub fn distance_to_boundary(&self, x: T) -> T {
        let dl = self.left.value().map_or(T::infinity(), |l| (x - l).abs());
        let dr = self.right.value().map_or(T::infinity(), |r| (r - x).abs());
        dl.min(dr)
    }
}

/// Monotone reparameterization of a positive coefficient.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Link {
    #[default]
    Exp,
    Identity,
    Square,
}

impl Link {
    pub fn apply<T: Real>(self, t: T) -> T {
        match self {
            Link::Exp => t.exp(),
            Link::Identity => t,
            Link::Square => t * t,
        }
    }

    pub fn derivative<T: Real>(self, t: T) -> T {
        match self {
            Link::Exp => t.exp(),
            Link::Identity => T::one(),
            Link::Square => lit::<T>(2.0) * t,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Family<T> {
    /// `θ = (μ, σ²)`, constant coefficients.
    BrownianMotion,
    Cev { gamma: T },
    Cir { alpha: T },
    Custom,
}

impl<T: Real> Family<T> {
    pub fn tag(&self) -> &'static str {
        match self {
            Family::BrownianMotion => "brownian",
            Family::Cev { .. } => "cev",
            Family::Cir { .. } => "cir",
            Family::Custom => "custom",
        }
    }
}

pub type Coefficient<T> = Arc<dyn Fn(T, &[T]) -> T + Send + Sync>;

#[derive(Clone)]
enum Coefficients<T> {
    Builtin { link_lambda: Link, link_sigma: Link },
    Custom { drift: Coefficient<T>, diffusion_sq: Coefficient<T> },
}

/// Drift `b(x, θ)` and squared diffusion `σ²(x, θ)` on a state space.
///
/// Custom models are responsible for the usual existence conditions
/// (Lipschitz diffusion coefficient, `C²` coefficients on the interior); they
/// are not checked.
#[derive(Clone)]
pub struct ParametricDiffusion<T> {
    family: Family<T>,
    state_space: StateSpace<T>,
    coefficients: Coefficients<T>,
    parameter_names: Vec<String>,
    diffusion_floor: T,
}

impl<T: Real> fmt::Debug for ParametricDiffusion<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ParametricDiffusion")
            .field("family", &self.family)
            .field("state_space", &self.state_space)
            .field("parameters", &self.parameter_names)
            .finish()
    }
}

fn default_floor<T: Real>() -> T {
    lit::<T>(1e-300).max(T::min_positive_value())
}

impl<T: Real> ParametricDiffusion<T> {
    /// Brownian motion with drift, `θ = (μ, σ²)`.
    pub fn brownian() -> Self {
        Self {
            family: Family::BrownianMotion,
            state_space: StateSpace::real_line(),
            coefficients: Coefficients::Builtin { link_lambda: Link::Identity, link_sigma: Link::Identity },
            parameter_names: vec!["mu".into(), "sigma_sq".into()],
            diffusion_floor: default_floor(),
        }
    }

    /// CEV process with fixed elasticity `gamma > 1`, `θ = (λ, ς)`.
    pub fn cev(gamma: T, link_lambda: Link, link_sigma: Link) -> Result<Self> {
        if !(gamma > T::one()) {
            return Err(Error::InvalidConfig(format!("CEV elasticity must exceed 1, got {gamma}")));
        }
        Ok(Self {
            family: Family::Cev { gamma },
            state_space: StateSpace::positive(),
            coefficients: Coefficients::Builtin { link_lambda, link_sigma },
            parameter_names: vec!["lambda".into(), "sigma".into()],
            diffusion_floor: default_floor(),
        })
    }

    /// CIR process with known long-run level `alpha > 0`, `θ = (λ, ς)`.
    pub fn cir(alpha: T, link_lambda: Link, link_sigma: Link) -> Result<Self> {
        if !(alpha > T::zero()) {
            return Err(Error::InvalidConfig(format!("CIR level must be positive, got {alpha}")));
        }
        Ok(Self {
            family: Family::Cir { alpha },
            state_space: StateSpace::positive(),
            coefficients: Coefficients::Builtin { link_lambda, link_sigma },
            parameter_names: vec!["lambda".into(), "sigma".into()],
            diffusion_floor: default_floor(),
        })
    }

    pub fn custom(
        parameter_names: Vec<String>,
        state_space: StateSpace<T>,
        drift: Coefficient<T>,
        diffusion_sq: Coefficient<T>,
    ) -> Self {
        Self {
            family: Family::Custom,
            state_space,
            coefficients: Coefficients::Custom { drift, diffusion_sq },
            parameter_names,
            diffusion_floor: default_floor(),
        }
    }

    pub fn with_diffusion_floor(mut self, floor: T) -> Self {
        self.diffusion_floor = floor;
        self
    }

    pub fn family(&self) -> Family<T> {
        self.family
    }

    pub fn state_space(&self) -> &StateSpace<T> {
        &self.state_space
    }

    pub fn parameter_names(&self) -> &[String] {
        &self.parameter_names
    }

    pub fn dimension(&self) -> usize {
        self.parameter_names.len()
    }

    pub fn diffusion_floor(&self) -> T {
        self.diffusion_floor
    }

    pub fn parameter_index(&self, name: &str) -> Option<usize> {
        self.parameter_names.iter().position(|n| n == name)
    }

    fn links(&self) -> (Link, Link) {
        match &self.coefficients {
            Coefficients::Builtin { link_lambda, link_sigma } => (*link_lambda, *link_sigma),
            Coefficients::Custom { .. } => (Link::Identity, Link::Identity),
        }
    }

    /// Drift `b(x, θ)`. No domain checks.
    pub fn drift(&self, x: T, theta: &[T]) -> T {
        let (ll, ls) = self.links();
        match (&self.family, &self.coefficients) {
            (_, Coefficients::Custom { drift, .. }) => drift(x, theta),
            (Family::BrownianMotion, _) => theta[0],
            (Family::Cev { .. }, _) => ll.apply(theta[0]) * ls.apply(theta[1]) * x,
            (Family::Cir { alpha }, _) => ll.apply(theta[0]) * ls.apply(theta[1]) * (*alpha - x),
            (Family::Custom, _) => unreachable!("custom family always carries callbacks"),
        }
    }

    /// Squared diffusion coefficient `σ²(x, θ)`. No domain checks.
    pub fn diffusion_sq(&self, x: T, theta: &[T]) -> T {
        let (_, ls) = self.links();
        match (&self.family, &self.coefficients) {
            (_, Coefficients::Custom { diffusion_sq, .. }) => diffusion_sq(x, theta),
            (Family::BrownianMotion, _) => theta[1],
            (Family::Cev { gamma }, _) => ls.apply(theta[1]) * x.abs().powf(lit::<T>(2.0) * *gamma),
            (Family::Cir { .. }, _) => ls.apply(theta[1]) * x,
            (Family::Custom, _) => unreachable!("custom family always carries callbacks"),
        }
    }

    /// `b/σ²` without domain checks; the built-in families use the closed form.
    pub fn ratio_unchecked(&self, x: T, theta: &[T]) -> T {
        let (ll, _) = self.links();
        match (&self.family, &self.coefficients) {
            (Family::BrownianMotion, Coefficients::Builtin { .. }) => theta[0] / theta[1],
            (Family::Cev { gamma }, Coefficients::Builtin { .. }) => {
                ll.apply(theta[0]) * x.powf(T::one() - lit::<T>(2.0) * *gamma)
            }
            (Family::Cir { alpha }, Coefficients::Builtin { .. }) => ll.apply(theta[0]) * (*alpha - x) / x,
            _ => self.drift(x, theta) / self.diffusion_sq(x, theta),
        }
    }

    pub fn check_parameters(&self, theta: &[T]) -> Result<()> {
        if theta.len() != self.dimension() {
            return Err(Error::DimensionMismatch { expected: self.dimension(), got: theta.len() });
        }
        if theta.iter().any(|t| !t.is_finite()) {
            return Err(Error::NonFinite("parameter vector".into()));
        }
        Ok(())
    }

    /// Checks `x` is interior and `σ²(x, θ)` clears the floor, returning `σ²`.
    pub fn checked_diffusion_sq(&self, x: T, theta: &[T]) -> Result<T> {
        if !self.state_space.in_interior(x) {
            return Err(Error::Domain { x: x.as_f64() });
        }
        let s2 = self.diffusion_sq(x, theta);
        if !(s2 > self.diffusion_floor) {
            return Err(Error::Singular { x: x.as_f64(), value: s2.as_f64(), floor: self.diffusion_floor.as_f64() });
        }
        Ok(s2)
    }

    /// `b(x, θ) / σ²(x, θ)`.
    pub fn ratio(&self, x: T, theta: &[T]) -> Result<T> {
        self.check_parameters(theta)?;
        self.checked_diffusion_sq(x, theta)?;
        let r = self.ratio_unchecked(x, theta);
        if !r.is_finite() {
            return Err(Error::NonFinite(format!("b/sigma^2 at x = {x}")));
        }
        Ok(r)
    }

    /// Central difference of `b/σ²` in parameter coordinate `coordinate`.
    pub fn ratio_partial(&self, x: T, theta: &[T], coordinate: usize) -> Result<T> {
        self.check_parameters(theta)?;
        if coordinate >= theta.len() {
            return Err(Error::DimensionMismatch { expected: theta.len(), got: coordinate + 1 });
        }
        let h = fd_step(theta[coordinate]);
        let mut up = theta.to_vec();
        let mut dn = theta.to_vec();
        up[coordinate] += h;
        dn[coordinate] -= h;
        let r_up = self.ratio(x, &up)?;
        let r_dn = self.ratio(x, &dn)?;
        Ok((r_up - r_dn) / (h + h))
    }
}

/// Finite-difference bandwidth `max(1e-5, 1e-5 |θ|)`.
pub fn fd_step<T: Real>(theta: T) -> T {
    let h = lit::<T>(1e-5);
    h.max(h * theta.abs())
}
