use thiserror::Error;

use crate::grid::GridViolation;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("state {x} is outside the interior of the state space")]
    Domain { x: f64 },

    #[error("diffusion coefficient {value:e} at x = {x} is below the floor {floor:e}")]
    Singular { x: f64, value: f64, floor: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("quadrature on [{a}, {b}] did not converge: estimate {estimate}, error {error:e} after {subdivisions} subdivisions")]
    Quadrature {
        a: f64,
        b: f64,
        estimate: f64,
        error: f64,
        subdivisions: usize,
    },

    #[error("exponent range {range:.1} on [{a}, {b}] overflows; rescale the parameterization")]
    Overflow { a: f64, b: f64, range: f64 },

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid grid: {0:?}")]
    InvalidGrid(Vec<GridViolation>),

    #[error("state {0} is not a grid point")]
    UnknownGridPoint(f64),

    #[error("excursion exceeded the maximum path time {limit}")]
    PathTimeExceeded { limit: f64 },

    #[error("derivative of b/sigma^2 with respect to the parameter vanishes at x = {x} ({value:e})")]
    VanishingDerivative { x: f64, value: f64 },

    #[error("alpha(d) vanishes at grid point {d}")]
    ZeroAlpha { d: f64 },

    #[error("matrix is singular")]
    SingularMatrix,

    #[error("matrix is not symmetric positive definite")]
    NotPositiveDefinite,

    #[error("transition matrix is reducible")]
    Reducible,

    #[error("matrix is not of type II")]
    NotTypeTwo,

    #[error("eigenvalue {eigenvalue} of K*A does not exceed 1/2")]
    EigenvalueCondition { eigenvalue: f64 },

    #[error("{0}")]
    Io(String),
}
