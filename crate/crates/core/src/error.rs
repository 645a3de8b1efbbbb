use thiserror::Error;

/// Errors raised by the discretization, the solvers and the audits.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("permeability value {value} at quadrature point {index} outside [{k_min}, {k_max}]")]
    PermeabilityOutOfBounds {
        index: usize,
        value: f64,
        k_min: f64,
        k_max: f64,
    },

    #[error("singular system ({context})")]
    Singular { context: String },

    #[error("dense operator needs {dofs} pressure dofs, cap is {cap}")]
    CapExceeded { dofs: usize, cap: usize },

    #[error("unknown case `{0}`")]
    UnknownCase(String),

    #[error("incompatible source for the pure Neumann layout: integral of S = {integral:e} at t = {time}")]
    IncompatibleSource { integral: f64, time: f64 },

    #[error("fixed-point iteration did not converge after {iterations} iterations (last residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("empty free space: {0}")]
    EmptySpace(String),

    #[error("eigensolve failed: {0}")]
    Eigen(String),

    #[error("mismatch: {0}")]
    Mismatch(String),

    #[error("wrong boundary layout: {0}")]
    WrongLayout(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
