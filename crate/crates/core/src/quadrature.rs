//! Adaptive Gauss-Kronrod (7/15) integration and a fixed 5-point Gauss-Legendre rule.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{lit, Real};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QuadratureConfig<T> {
    pub rel_tol: T,
    pub abs_tol: T,
    pub max_subdivisions: usize,
    /// Node count of the mesh carrying inner antiderivatives.
    pub mesh_size: usize,
}

impl<T: Real> Default for QuadratureConfig<T> {
    fn default() -> Self {
        Self { rel_tol: lit(1e-10), abs_tol: lit(1e-12), max_subdivisions: 200, mesh_size: 2048 }
    }
}

impl<T: Real> QuadratureConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tol > T::zero()) || !(self.abs_tol > T::zero()) {
            return Err(Error::InvalidConfig("quadrature tolerances must be positive".into()));
        }
        if self.mesh_size < 16 {
            return Err(Error::InvalidConfig(format!("mesh_size must be at least 16, got {}", self.mesh_size)));
        }
        if self.max_subdivisions == 0 {
            return Err(Error::InvalidConfig("max_subdivisions must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate<T> {
    pub value: T,
    pub error: T,
    pub subdivisions: usize,
}

const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
];

const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];

const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

pub(crate) const GL5_NODES: [f64; 5] =
    [-0.906179845938663992797626878299393, -0.538469310105683091036314420700208, 0.0, 0.538469310105683091036314420700208, 0.906179845938663992797626878299393];

pub(crate) const GL5_WEIGHTS: [f64; 5] =
    [0.236926885056189087514264040719918, 0.478628670499366468041291514835638, 0.568888888888888888888888888888889, 0.478628670499366468041291514835638, 0.236926885056189087514264040719918];

/// Fixed 5-point Gauss-Legendre rule on `[a, b]`.
pub fn gauss_legendre_5<T: Real, F: FnMut(T) -> Result<T>>(mut f: F, a: T, b: T) -> Result<T> {
    let half = (b - a) * lit::<T>(0.5);
    let mid = (a + b) * lit::<T>(0.5);
    let mut acc = T::zero();
    for (x, w) in GL5_NODES.iter().zip(GL5_WEIGHTS.iter()) {
        acc += lit::<T>(*w) * f(mid + half * lit::<T>(*x))?;
    }
    Ok(acc * half)
}

struct Segment<T> {
    a: T,
    b: T,
    value: T,
    error: T,
}

impl<T: Real> PartialEq for Segment<T> {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl<T: Real> Eq for Segment<T> {}
impl<T: Real> PartialOrd for Segment<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<T: Real> Ord for Segment<T> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.partial_cmp(&other.error).unwrap_or(Ordering::Equal)
    }
}

fn kronrod<T: Real, F: FnMut(T) -> Result<T>>(f: &mut F, a: T, b: T) -> Result<Segment<T>> {
    let half = (b - a) * lit::<T>(0.5);
    let center = (a + b) * lit::<T>(0.5);
    let fc = f(center)?;
    let mut resk = fc * lit::<T>(WGK[7]);
    let mut resg = fc * lit::<T>(WG[3]);
    let mut resabs = resk.abs();
    let mut fv1 = [T::zero(); 7];
    let mut fv2 = [T::zero(); 7];
    for j in 0..7 {
        let dx = half * lit::<T>(XGK[j]);
        let f1 = f(center - dx)?;
        let f2 = f(center + dx)?;
        fv1[j] = f1;
        fv2[j] = f2;
        let w = lit::<T>(WGK[j]);
        resk += w * (f1 + f2);
        resabs += w * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            resg += lit::<T>(WG[j / 2]) * (f1 + f2);
        }
    }
    let reskh = resk * lit::<T>(0.5);
    let mut resasc = lit::<T>(WGK[7]) * (fc - reskh).abs();
    for j in 0..7 {
        resasc += lit::<T>(WGK[j]) * ((fv1[j] - reskh).abs() + (fv2[j] - reskh).abs());
    }
    let value = resk * half;
    let resabs = resabs * half.abs();
    let resasc = resasc * half.abs();
    let mut err = ((resk - resg) * half).abs();
    if resasc != T::zero() && err != T::zero() {
        let scale = (lit::<T>(200.0) * err / resasc).powf(lit::<T>(1.5));
        err = resasc * scale.min(T::one());
    }
    let eps = T::epsilon();
    if resabs > T::min_positive_value() / (lit::<T>(50.0) * eps) {
        err = err.max(lit::<T>(50.0) * eps * resabs);
    }
    Ok(Segment { a, b, value, error: err })
}

/// Globally adaptive Gauss-Kronrod integration of `f` over `[a, b]`.
///
/// Bisects the interval with the largest error estimate until the total error
/// is below `max(abs_tol, rel_tol |I|)`, or until it reaches the roundoff floor
/// `50 eps |I|`.
pub fn integrate<T: Real, F: FnMut(T) -> Result<T>>(mut f: F, a: T, b: T, cfg: &QuadratureConfig<T>) -> Result<Estimate<T>> {
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::NonFinite("integration limits".into()));
    }
    if a == b {
        return Ok(Estimate { value: T::zero(), error: T::zero(), subdivisions: 0 });
    }
    let first = kronrod(&mut f, a, b)?;
    let mut total = first.value;
    let mut error = first.error;
    let mut heap = BinaryHeap::new();
    heap.push(first);
    let mut subdivisions = 1;
    let floor = |v: T| lit::<T>(50.0) * T::epsilon() * v.abs();
    loop {
        if !(total.is_finite() && error.is_finite()) {
            return Err(Error::NonFinite(format!("integral over [{a}, {b}]")));
        }
        let tol = cfg.abs_tol.max(cfg.rel_tol * total.abs()).max(floor(total));
        if error <= tol {
            return Ok(Estimate { value: total, error, subdivisions });
        }
        if subdivisions >= cfg.max_subdivisions {
            return Err(Error::Quadrature {
                a: a.as_f64(),
                b: b.as_f64(),
                estimate: total.as_f64(),
                error: error.as_f64(),
                subdivisions,
            });
        }
        let worst = heap.pop().expect("heap never empties");
        let mid = (worst.a + worst.b) * lit::<T>(0.5);
        let left = kronrod(&mut f, worst.a, mid)?;
        let right = kronrod(&mut f, mid, worst.b)?;
        subdivisions += 1;
        heap.push(left);
        heap.push(right);
        total = heap.iter().map(|s| s.value).sum();
        error = heap.iter().map(|s| s.error).sum();
    }
}
