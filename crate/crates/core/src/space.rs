use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{lit, Real};

/// Constraint set `H` for the iterates: all of `R^s` or a finite box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ParameterSpace<T> {
    Unconstrained { dimension: usize },
    Box { lower: Vec<T>, upper: Vec<T> },
}

impl<T: Real> ParameterSpace<T> {
    pub fn unconstrained(dimension: usize) -> Result<Self> {
        if dimension == 0 {
            return Err(Error::InvalidConfig("parameter dimension must be positive".into()));
        }
        Ok(Self::Unconstrained { dimension })
    }

    pub fn boxed(lower: Vec<T>, upper: Vec<T>) -> Result<Self> {
        if lower.is_empty() {
            return Err(Error::InvalidConfig("parameter dimension must be positive".into()));
        }
        if lower.len() != upper.len() {
            return Err(Error::DimensionMismatch { expected: lower.len(), got: upper.len() });
        }
        for (i, (a, b)) in lower.iter().zip(&upper).enumerate() {
            if !(a.is_finite() && b.is_finite() && a < b) {
                return Err(Error::InvalidConfig(format!("box coordinate {i}: need finite a < b, got [{a}, {b}]")));
            }
        }
        Ok(Self::Box { lower, upper })
    }

    pub fn dimension(&self) -> usize {
        match self {
            Self::Unconstrained { dimension } => *dimension,
            Self::Box { lower, .. } => lower.len(),
        }
    }

    pub fn is_box(&self) -> bool {
        matches!(self, Self::Box { .. })
    }

    fn check(&self, theta: &[T]) -> Result<()> {
        if theta.len() != self.dimension() {
            return Err(Error::DimensionMismatch { expected: self.dimension(), got: theta.len() });
        }
        Ok(())
    }

    /// Coordinate-wise clamp onto the box; identity when unconstrained.
    pub fn project(&self, theta: &[T]) -> Result<Vec<T>> {
        self.check(theta)?;
        Ok(match self {
            Self::Unconstrained { .. } => theta.to_vec(),
            Self::Box { lower, upper } => {
                theta.iter().zip(lower.iter().zip(upper)).map(|(&t, (&a, &b))| t.max(a).min(b)).collect()
            }
        })
    }

    pub fn contains(&self, theta: &[T]) -> Result<bool> {
        self.check(theta)?;
        Ok(match self {
            Self::Unconstrained { .. } => theta.iter().all(|t| t.is_finite()),
            Self::Box { lower, upper } => {
                theta.iter().zip(lower.iter().zip(upper)).all(|(&t, (&a, &b))| a <= t && t <= b)
            }
        })
    }

    /// Default starting point: box midpoint, or the origin.
    pub fn default_start(&self) -> Vec<T> {
        match self {
            Self::Unconstrained { dimension } => vec![T::zero(); *dimension],
            Self::Box { lower, upper } => lower.iter().zip(upper).map(|(&a, &b)| (a + b) * lit::<T>(0.5)).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn unit_square() -> ParameterSpace<f64> {
        ParameterSpace::boxed(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap()
    }

    #[test]
    fn interior_point_is_fixed() {
        assert_eq!(unit_square().project(&[0.5, 0.5]).unwrap(), vec![0.5, 0.5]);
    }

    #[test]
    fn both_coordinates_clamp() {
        assert_eq!(unit_square().project(&[1.3, -0.2]).unwrap(), vec![1.0, 0.0]);
    }

    #[test]
    fn unconstrained_projection_is_identity() {
        let h = ParameterSpace::<f64>::unconstrained(1).unwrap();
        assert_eq!(h.project(&[7.2]).unwrap(), vec![7.2]);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        assert!(matches!(unit_square().project(&[0.1]), Err(Error::DimensionMismatch { expected: 2, got: 1 })));
    }

    #[test]
    fn degenerate_boxes_are_rejected() {
        assert!(ParameterSpace::boxed(vec![1.0], vec![1.0]).is_err());
        assert!(ParameterSpace::boxed(vec![0.0], vec![f64::INFINITY]).is_err());
        assert!(ParameterSpace::<f64>::unconstrained(0).is_err());
    }

    #[test]
    fn default_start_is_midpoint() {
        let h = ParameterSpace::boxed(vec![-1.0, 0.0], vec![1.0, 4.0]).unwrap();
        assert_eq!(h.default_start(), vec![0.0, 2.0]);
    }

    proptest! {
        #[test]
        fn projection_is_idempotent(x in -5.0f64..5.0, y in -5.0f64..5.0, lo in -2.0f64..0.0, w in 0.1f64..3.0) {
            let h = ParameterSpace::boxed(vec![lo, lo], vec![lo + w, lo + w]).unwrap();
            let once = h.project(&[x, y]).unwrap();
            prop_assert_eq!(h.project(&once).unwrap(), once.clone());
            prop_assert!(h.contains(&once).unwrap());
        }

        #[test]
        fn projection_fixes_exactly_the_members(x in -3.0f64..3.0, y in -3.0f64..3.0) {
            let h = ParameterSpace::boxed(vec![-1.0, -1.0], vec![1.0, 1.0]).unwrap();
            let p = h.project(&[x, y]).unwrap();
            prop_assert_eq!(p == vec![x, y], h.contains(&[x, y]).unwrap());
        }
    }
}
