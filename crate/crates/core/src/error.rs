use core::fmt;

/// Failure modes of the finite element kernels.
#[derive(Clone, Debug, PartialEq)]
pub enum Error {
    InvalidMesh(&'static str),
    ElementOutOfRange { index: usize, count: usize },
    UnsupportedQuadrature(u32),
    SingularJacobian { element: usize },
    DegenerateStabilization,
    NonFiniteCoefficient { element: usize, what: &'static str },
    InvalidParameter(&'static str),
    DimensionMismatch { expected: usize, found: usize },
    SolverBreakdown { iterations: usize, residual: f64 },
    NotConverged { iterations: usize, residual: f64 },
    Solver(&'static str),
    NonPositiveError,
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidMesh(msg) => write!(f, "invalid mesh: {msg}"),
            Error::ElementOutOfRange { index, count } => {
                write!(f, "element index {index} out of range (mesh has {count})")
            }
            Error::UnsupportedQuadrature(d) => write!(f, "no quadrature rule of degree {d}"),
            Error::SingularJacobian { element } => {
                write!(f, "singular element map on element {element}")
            }
            Error::DegenerateStabilization => write!(
                f,
                "stabilization undefined: diffusion, velocity and reaction all vanish"
            ),
            Error::NonFiniteCoefficient { element, what } => {
                write!(f, "non-finite {what} on element {element}")
            }
            Error::InvalidParameter(msg) => write!(f, "invalid parameter: {msg}"),
            Error::DimensionMismatch { expected, found } => {
                write!(f, "dimension mismatch: expected {expected}, found {found}")
            }
            Error::SolverBreakdown { iterations, residual } => write!(
                f,
                "iterative solver broke down after {iterations} iterations (residual {residual:e})"
            ),
            Error::NotConverged { iterations, residual } => write!(
                f,
                "iterative solver did not converge in {iterations} iterations (residual {residual:e})"
            ),
            Error::Solver(msg) => write!(f, "linear solver failure: {msg}"),
            Error::NonPositiveError => write!(f, "convergence rate needs positive errors"),
        }
    }
}

impl core::error::Error for Error {}
