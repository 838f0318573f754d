//! Small sample statistics.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

/// Linear interpolation between order statistics (Hyndman-Fan type 7).
pub fn quantile(xs: &[f64], q: f64) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let h = (v.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    v[lo] + (h - lo as f64) * (v[hi] - v[lo])
}

pub fn median(xs: &[f64]) -> f64 {
    quantile(xs, 0.5)
}

pub fn normal_quantile(q: f64) -> f64 {
    Normal::standard().inverse_cdf(q)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Quantiles {
    pub q10: f64,
    pub q25: f64,
    pub q50: f64,
    pub q75: f64,
    pub q90: f64,
}

impl Quantiles {
    pub fn of(xs: &[f64]) -> Self {
        Self {
            q10: quantile(xs, 0.1),
            q25: quantile(xs, 0.25),
            q50: quantile(xs, 0.5),
            q75: quantile(xs, 0.75),
            q90: quantile(xs, 0.9),
        }
    }
}

/// Mean and variance with the standard errors of both, from a sample of `n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub n: usize,
    pub mean: f64,
    pub mean_se: f64,
    pub variance: f64,
    pub variance_se: f64,
}

impl Moments {
    pub fn of(xs: &[f64]) -> Self {
        let n = xs.len();
        let m = mean(xs);
        let c2 = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n as f64;
        let c4 = xs.iter().map(|x| (x - m).powi(4)).sum::<f64>() / n as f64;
        Self {
            n,
            mean: m,
            mean_se: (c2 / n as f64).sqrt(),
            variance: c2,
            variance_se: ((c4 - c2 * c2) / n as f64).max(0.0).sqrt(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantiles_interpolate() {
        let xs = [4.0, 1.0, 3.0, 2.0, 5.0];
        assert_eq!(median(&xs), 3.0);
        assert_eq!(quantile(&xs, 0.125), 1.5);
        assert_eq!(quantile(&xs, 1.0), 5.0);
        assert_eq!(variance(&xs), 2.5);
    }

    #[test]
    fn normal_quantiles() {
        assert!((normal_quantile(0.95) - 1.6448536269514722).abs() < 1e-9);
        assert!((normal_quantile(0.5)).abs() < 1e-12);
    }
}
