use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Family, ParametricDiffusion};
use crate::scalar::Real;

/// Open interval `(left, right)` around a grid point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Neighborhood<T> {
    pub left: T,
    pub right: T,
}

impl<T: Real> Neighborhood<T> {
    pub fn new(left: T, right: T) -> Self {
        Self { left, right }
    }

    pub fn contains(&self, x: T) -> bool {
        x > self.left && x < self.right
    }

    pub fn width(&self) -> T {
        self.right - self.left
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GridViolation {
    Empty,
    NotIncreasing { index: usize, point: f64 },
    OutsideNeighborhood { point: f64, left: f64, right: f64 },
    Overlap { first: f64, second: f64 },
    ContainsOtherPoint { point: f64, other: f64 },
    OutsideStateSpace { point: f64, left: f64, right: f64 },
    StraddlesLevel { point: f64, level: f64 },
}

/// Ordered trigger points `d_1 < ... < d_s`, each with its own neighborhood.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationGrid<T> {
    points: Vec<T>,
    neighborhoods: Vec<Neighborhood<T>>,
}

impl<T: Real> ObservationGrid<T> {
    /// Pairs points with neighborhoods. Structural checks are left to [`validate`](Self::validate).
    pub fn new(points: Vec<T>, neighborhoods: Vec<Neighborhood<T>>) -> Result<Self> {
        if points.len() != neighborhoods.len() {
            return Err(Error::DimensionMismatch { expected: points.len(), got: neighborhoods.len() });
        }
        let finite = points.iter().all(|p| p.is_finite())
            && neighborhoods.iter().all(|u| u.left.is_finite() && u.right.is_finite());
        if !finite {
            return Err(Error::NonFinite("grid coordinates".into()));
        }
        Ok(Self { points, neighborhoods })
    }

    /// Neighborhoods `(d - h, d + h)`.
    pub fn symmetric(points: Vec<T>, half_width: T) -> Result<Self> {
        let hoods = points.iter().map(|&d| Neighborhood::new(d - half_width, d + half_width)).collect();
        Self::new(points, hoods)
    }

    pub fn points(&self) -> &[T] {
        &self.points
    }

    pub fn neighborhoods(&self) -> &[Neighborhood<T>] {
        &self.neighborhoods
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, i: usize) -> T {
        self.points[i]
    }

    pub fn neighborhood(&self, i: usize) -> Neighborhood<T> {
        self.neighborhoods[i]
    }

    /// Index of an exact grid point.
    pub fn index_of(&self, d: T) -> Result<usize> {
        self.points.iter().position(|&p| p == d).ok_or(Error::UnknownGridPoint(d.as_f64()))
    }

    /// Every violation of the grid conditions for `model`; empty means valid.
    pub fn validate(&self, model: &ParametricDiffusion<T>) -> Vec<GridViolation> {
        let mut out = Vec::new();
        if self.points.is_empty() {
            out.push(GridViolation::Empty);
            return out;
        }
        for i in 1..self.points.len() {
            if !(self.points[i] > self.points[i - 1]) {
                out.push(GridViolation::NotIncreasing { index: i, point: self.points[i].as_f64() });
            }
        }
        let space = model.state_space();
        for (i, (&d, u)) in self.points.iter().zip(&self.neighborhoods).enumerate() {
            if !u.contains(d) {
                out.push(GridViolation::OutsideNeighborhood {
                    point: d.as_f64(),
                    left: u.left.as_f64(),
                    right: u.right.as_f64(),
                });
            }
            for (j, &e) in self.points.iter().enumerate() {
                if j != i && u.contains(e) {
                    out.push(GridViolation::ContainsOtherPoint { point: d.as_f64(), other: e.as_f64() });
                }
            }
            if !(space.in_interior(u.left) && space.in_interior(u.right)) {
                out.push(GridViolation::OutsideStateSpace {
                    point: d.as_f64(),
                    left: u.left.as_f64(),
                    right: u.right.as_f64(),
                });
            }
            if let Family::Cir { alpha } = model.family() {
                if u.left <= alpha && alpha <= u.right {
                    out.push(GridViolation::StraddlesLevel { point: d.as_f64(), level: alpha.as_f64() });
                }
            }
        }
        for i in 0..self.neighborhoods.len() {
            for j in i + 1..self.neighborhoods.len() {
                let (a, b) = (self.neighborhoods[i], self.neighborhoods[j]);
                if a.left < b.right && b.left < a.right {
                    out.push(GridViolation::Overlap {
                        first: self.points[i].as_f64(),
                        second: self.points[j].as_f64(),
                    });
                }
            }
        }
        out
    }

    pub fn validated(self, model: &ParametricDiffusion<T>) -> Result<Self> {
        let v = self.validate(model);
        if v.is_empty() {
            Ok(self)
        } else {
            Err(Error::InvalidGrid(v))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Link;

    fn two(l1: f64, r1: f64, l2: f64, r2: f64) -> ObservationGrid<f64> {
        ObservationGrid::new(vec![1.0, 2.0], vec![Neighborhood::new(l1, r1), Neighborhood::new(l2, r2)]).unwrap()
    }

    #[test]
    fn disjoint_neighborhoods_validate() {
        let bm = ParametricDiffusion::brownian();
        assert!(two(0.5, 1.5, 1.6, 2.5).validate(&bm).is_empty());
    }

    #[test]
    fn overlap_is_reported() {
        let bm = ParametricDiffusion::brownian();
        let v = two(0.5, 1.7, 1.6, 2.5).validate(&bm);
        assert_eq!(v, vec![GridViolation::Overlap { first: 1.0, second: 2.0 }]);
    }

    #[test]
    fn neighborhood_leaving_state_space_is_reported() {
        let cir = ParametricDiffusion::cir(1.0, Link::Exp, Link::Exp).unwrap();
        let g = ObservationGrid::new(vec![0.5], vec![Neighborhood::new(-0.1, 1.0)]).unwrap();
        let v = g.validate(&cir);
        assert!(v.iter().any(|x| matches!(x, GridViolation::OutsideStateSpace { .. })));
    }

    #[test]
    fn point_must_sit_inside_its_neighborhood() {
        let bm = ParametricDiffusion::brownian();
        let v = two(1.2, 1.5, 1.6, 2.5).validate(&bm);
        assert!(matches!(v[0], GridViolation::OutsideNeighborhood { point, .. } if point == 1.0));
    }

    #[test]
    fn neighborhood_swallowing_a_neighbor_is_reported() {
        let bm = ParametricDiffusion::brownian();
        let g = ObservationGrid::new(vec![1.0, 2.0], vec![Neighborhood::new(0.0, 2.2), Neighborhood::new(1.9, 2.5)]).unwrap();
        let v = g.validate(&bm);
        assert!(v.contains(&GridViolation::ContainsOtherPoint { point: 1.0, other: 2.0 }));
        assert!(v.contains(&GridViolation::Overlap { first: 1.0, second: 2.0 }));
    }

    #[test]
    fn unordered_points_are_reported() {
        let bm = ParametricDiffusion::brownian();
        let g = ObservationGrid::symmetric(vec![2.0, 1.0], 0.1).unwrap();
        assert!(g.validate(&bm).contains(&GridViolation::NotIncreasing { index: 1, point: 1.0 }));
    }

    #[test]
    fn cir_neighborhood_may_not_contain_long_run_level() {
        let cir = ParametricDiffusion::cir(1.0, Link::Exp, Link::Exp).unwrap();
        let g = ObservationGrid::symmetric(vec![0.97], 0.05).unwrap();
        assert_eq!(g.validate(&cir), vec![GridViolation::StraddlesLevel { point: 0.97, level: 1.0 }]);
        let ok = ObservationGrid::symmetric(vec![0.7, 0.85, 1.15, 1.3], 0.05).unwrap();
        assert!(ok.validate(&cir).is_empty());
    }

    #[test]
    fn mismatched_lengths_are_rejected() {
        assert!(ObservationGrid::new(vec![1.0, 2.0], vec![Neighborhood::new(0.5, 1.5)]).is_err());
    }
}
