//! Recursive estimation of scalar diffusion parameters from observations taken
//! only when the path hits points of a spatial grid and leaves the intervals
//! around them.
//!
//! The crate is generic over the floating point type through [`Real`]; the
//! aliases at the bottom of this file fix it to `f64`, which is what the
//! harness and the acceptance suite use.

pub mod chain;
pub mod error;
pub mod estimator;
pub mod grid;
pub mod interp;
pub mod model;
pub mod moments;
pub mod quadrature;
pub mod scalar;
pub mod simulator;
pub mod space;

pub use error::{Error, Result};
pub use grid::{GridViolation, Neighborhood, ObservationGrid};
pub use model::{Endpoint, Family, Link, ParametricDiffusion, StateSpace};
pub use scalar::Real;
pub use space::ParameterSpace;

pub type Diffusion = model::ParametricDiffusion<f64>;
pub type Grid = grid::ObservationGrid<f64>;
pub type Space = space::ParameterSpace<f64>;
pub type QuadConfig = quadrature::QuadratureConfig<f64>;
pub type Table = moments::MomentTable<f64>;
pub type Record = simulator::ObservationRecord<f64>;
pub type Paths = simulator::PathConfig<f64>;
pub type Estimator = estimator::EstimatorState<f64>;
pub use chain::TransitionMatrix;
