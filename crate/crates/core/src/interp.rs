//! Chebyshev-spaced meshes and cubic Hermite tables of antiderivatives.

use crate::error::Result;
use crate::quadrature::{GL5_NODES, GL5_WEIGHTS};
use crate::scalar::{lit, Real};

/// `n` Chebyshev-Lobatto points on `[a, b]`, endpoints included exactly.
pub fn chebyshev_mesh<T: Real>(a: T, b: T, n: usize) -> Vec<T> {
    assert!(n >= 2, "mesh needs at least two nodes");
    let mid = (a + b) * lit::<T>(0.5);
    let half = (b - a) * lit::<T>(0.5);
    let last = lit::<T>((n - 1) as f64);
    let mut out: Vec<T> = (0..n)
        .map(|k| mid - half * (T::PI() * lit::<T>(k as f64) / last).cos())
        .collect();
    out[0] = a;
    out[n - 1] = b;
    out
}

/// Piecewise cubic Hermite interpolant with known node slopes.
#[derive(Debug, Clone)]
pub struct HermiteTable<T> {
    nodes: Vec<T>,
    values: Vec<T>,
    slopes: Vec<T>,
}

impl<T: Real> HermiteTable<T> {
    pub fn new(nodes: Vec<T>, values: Vec<T>, slopes: Vec<T>) -> Self {
        assert!(nodes.len() >= 2 && nodes.len() == values.len() && nodes.len() == slopes.len());
        Self { nodes, values, slopes }
    }

    /// Tabulates `y -> ∫_{nodes[0]}^y f` with a 5-point Gauss-Legendre rule per panel.
    pub fn antiderivative<F: FnMut(T) -> Result<T>>(nodes: &[T], mut f: F) -> Result<Self> {
        let n = nodes.len();
        let mut values = Vec::with_capacity(n);
        let mut slopes = Vec::with_capacity(n);
        let mut acc = T::zero();
        values.push(acc);
        slopes.push(f(nodes[0])?);
        for k in 0..n - 1 {
            let (a, b) = (nodes[k], nodes[k + 1]);
            let half = (b - a) * lit::<T>(0.5);
            let mid = (a + b) * lit::<T>(0.5);
            let mut panel = T::zero();
            for (x, w) in GL5_NODES.iter().zip(GL5_WEIGHTS.iter()) {
                panel += lit::<T>(*w) * f(mid + half * lit::<T>(*x))?;
            }
            acc += panel * half;
            values.push(acc);
            slopes.push(f(b)?);
        }
        Ok(Self { nodes: nodes.to_vec(), values, slopes })
    }

    pub fn nodes(&self) -> &[T] {
        &self.nodes
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn slopes(&self) -> &[T] {
        &self.slopes
    }

    pub fn last(&self) -> T {
        self.values[self.values.len() - 1]
    }

    fn panel(&self, x: T) -> usize {
        let k = self.nodes.partition_point(|&n| n <= x);
        k.clamp(1, self.nodes.len() - 1) - 1
    }

    /// Evaluates the interpolant; clamps outside the node range.
    pub fn eval(&self, x: T) -> T {
        let n = self.nodes.len();
        if x <= self.nodes[0] {
            return self.values[0];
        }
        if x >= self.nodes[n - 1] {
            return self.values[n - 1];
        }
        let k = self.panel(x);
        let (x0, x1) = (self.nodes[k], self.nodes[k + 1]);
        let h = x1 - x0;
        let t = (x - x0) / h;
        let t2 = t * t;
        let t3 = t2 * t;
        let two = lit::<T>(2.0);
        let three = lit::<T>(3.0);
        let h00 = two * t3 - three * t2 + T::one();
        let h10 = t3 - two * t2 + t;
        let h01 = three * t2 - two * t3;
        let h11 = t3 - t2;
        h00 * self.values[k] + h10 * h * self.slopes[k] + h01 * self.values[k + 1] + h11 * h * self.slopes[k + 1]
    }

    pub fn min_value(&self) -> T {
        self.values.iter().copied().fold(T::infinity(), T::min)
    }

    pub fn max_value(&self) -> T {
        self.values.iter().copied().fold(T::neg_infinity(), T::max)
    }
}

/// Tensor-product polynomial interpolant on Chebyshev-Lobatto nodes over a box.
#[derive(Debug, Clone)]
pub struct TensorChebyshev<T> {
    lower: Vec<T>,
    upper: Vec<T>,
    nodes: Vec<T>,
    weights: Vec<T>,
    diff: Vec<Vec<T>>,
    values: Vec<T>,
}

impl<T: Real> TensorChebyshev<T> {
    /// Samples `f` on `m^s` nodes of the box `[lower, upper]`.
    pub fn build<F: FnMut(&[T]) -> Result<T>>(lower: &[T], upper: &[T], m: usize, mut f: F) -> Result<Self> {
        assert!(m >= 2 && lower.len() == upper.len() && !lower.is_empty());
        let s = lower.len();
        let nodes = chebyshev_mesh(-T::one(), T::one(), m);
        let mut weights: Vec<T> = (0..m).map(|j| if j % 2 == 0 { T::one() } else { -T::one() }).collect();
        weights[0] = weights[0] * lit::<T>(0.5);
        weights[m - 1] = weights[m - 1] * lit::<T>(0.5);
        let mut diff = vec![vec![T::zero(); m]; m];
        for i in 0..m {
            let mut row = T::zero();
            for j in 0..m {
                if i != j {
                    diff[i][j] = (weights[j] / weights[i]) / (nodes[i] - nodes[j]);
                    row += diff[i][j];
                }
            }
            diff[i][i] = -row;
        }
        let total = m.pow(s as u32);
        let mut values = Vec::with_capacity(total);
        let mut point = vec![T::zero(); s];
        for flat in 0..total {
            let mut rest = flat;
            for k in (0..s).rev() {
                let j = rest % m;
                rest /= m;
                let t = (nodes[j] + T::one()) * lit::<T>(0.5);
                point[k] = lower[k] + (upper[k] - lower[k]) * t;
            }
            values.push(f(&point)?);
        }
        Ok(Self { lower: lower.to_vec(), upper: upper.to_vec(), nodes, weights, diff, values })
    }

    pub fn contains(&self, x: &[T]) -> bool {
        x.iter().zip(self.lower.iter().zip(&self.upper)).all(|(&v, (&a, &b))| a <= v && v <= b)
    }

    fn basis(&self, t: T) -> (Vec<T>, Vec<T>) {
        let m = self.nodes.len();
        let mut l = vec![T::zero(); m];
        if let Some(j) = self.nodes.iter().position(|&n| n == t) {
            l[j] = T::one();
        } else {
            let mut den = T::zero();
            for j in 0..m {
                l[j] = self.weights[j] / (t - self.nodes[j]);
                den += l[j];
            }
            for v in l.iter_mut() {
                *v /= den;
            }
        }
        let dl = (0..m).map(|j| (0..m).map(|i| l[i] * self.diff[i][j]).sum()).collect();
        (l, dl)
    }

    /// Value and gradient at `x`.
    pub fn eval(&self, x: &[T]) -> (T, Vec<T>) {
        let s = self.lower.len();
        let m = self.nodes.len();
        let two = lit::<T>(2.0);
        let mut vals = Vec::with_capacity(s);
        let mut ders = Vec::with_capacity(s);
        let mut scale = Vec::with_capacity(s);
        for k in 0..s {
            let width = self.upper[k] - self.lower[k];
            let t = two * (x[k] - self.lower[k]) / width - T::one();
            let (l, dl) = self.basis(t);
            vals.push(l);
            ders.push(dl);
            scale.push(two / width);
        }
        let mut value = T::zero();
        let mut grad = vec![T::zero(); s];
        let mut idx = vec![0usize; s];
        for flat in 0..self.values.len() {
            let mut rest = flat;
            for k in (0..s).rev() {
                idx[k] = rest % m;
                rest /= m;
            }
            let f = self.values[flat];
            let mut prod = T::one();
            for k in 0..s {
                prod *= vals[k][idx[k]];
            }
            value += prod * f;
            for g in 0..s {
                let mut p = ders[g][idx[g]] * scale[g];
                for k in 0..s {
                    if k != g {
                        p *= vals[k][idx[k]];
                    }
                }
                grad[g] += p * f;
            }
        }
        (value, grad)
    }
}
