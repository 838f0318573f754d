//! Explicit expressions for the built-in families, computed without the nested
//! antiderivative machinery. The CEV and CIR exit laws reduce to one integral of
//! an explicit scale density, evaluated here with a fixed composite rule.

use crate::error::Result;
use crate::quadrature::gauss_legendre_5;
use crate::scalar::{lit, Real};

const PANELS: usize = 400;

fn composite<T: Real, F: Fn(T) -> T>(f: &F, a: T, b: T) -> T {
    let h = (b - a) / lit::<T>(PANELS as f64);
    let mut acc = T::zero();
    for k in 0..PANELS {
        let lo = a + h * lit::<T>(k as f64);
        let hi = if k + 1 == PANELS { b } else { lo + h };
        acc += gauss_legendre_5(|y| Result::Ok(f(y)), lo, hi).unwrap_or_else(|_| T::nan());
    }
    acc
}

/// `∫_l^x e^{e(y)} / ∫_l^r e^{e(y)}` for a log scale density `e` whose maximum is at an endpoint.
fn density_ratio<T: Real, E: Fn(T) -> T>(log_density: E, l: T, r: T, x: T) -> T {
    let shift = log_density(l).max(log_density(r));
    let w = |y: T| (log_density(y) - shift).exp();
    let below = composite(&w, l, x);
    let above = composite(&w, x, r);
    below / (below + above)
}

/// Scale function of Brownian motion with drift, anchored at `c`.
pub fn brownian_scale<T: Real>(mu: T, sigma_sq: T, c: T, x: T) -> T {
    if mu == T::zero() {
        return x - c;
    }
    let k = lit::<T>(2.0) * mu / sigma_sq;
    -(-k * (x - c)).exp_m1() / k
}

pub fn brownian_exit_probability<T: Real>(mu: T, sigma_sq: T, c: T, d: T, x: T) -> T {
    brownian_scale(mu, sigma_sq, c, x) / brownian_scale(mu, sigma_sq, c, d)
}

pub fn brownian_exit_time<T: Real>(mu: T, sigma_sq: T, c: T, d: T, x: T) -> T {
    if mu == T::zero() {
        return (x - c) * (d - x) / sigma_sq;
    }
    let p = brownian_exit_probability(mu, sigma_sq, c, d, x);
    ((d - c) * p - (x - c)) / mu
}

/// `E_x τ²` for driftless Brownian motion on `(c, d)`.
pub fn driftless_exit_time_second_moment<T: Real>(sigma_sq: T, c: T, d: T, x: T) -> T {
    let a = x - c;
    let b = d - x;
    a * b * (a * a + b * b + lit::<T>(3.0) * a * b) / (lit::<T>(3.0) * sigma_sq * sigma_sq)
}

/// CEV mean exit point: scale density `exp((ρ/(γ-1)) y^{2-2γ})`.
pub fn cev_exit_value<T: Real>(gamma: T, rho: T, l: T, r: T, d: T) -> T {
    let k = rho / (gamma - T::one());
    let q = lit::<T>(2.0) - lit::<T>(2.0) * gamma;
    let p = density_ratio(|y: T| k * y.powf(q), l, r, d);
    l + (r - l) * p
}

/// CIR mean exit point: scale density `y^{-2αρ} exp(2ρy)`.
pub fn cir_exit_value<T: Real>(alpha: T, rho: T, l: T, r: T, d: T) -> T {
    let two = lit::<T>(2.0);
    let p = density_ratio(|y: T| -two * alpha * rho * y.ln() + two * rho * y, l, r, d);
    l + (r - l) * p
}
