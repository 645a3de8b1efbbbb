//! Finite-element lab for quasi-static Biot poroelasticity with
//! dilation-dependent permeability.
//!
//! Displacement is continuous piecewise quadratic and clamped on the whole
//! boundary; pressure is continuous piecewise linear. The pressure boundary
//! layout picks the pressure space: Dirichlet vertices removed, or a
//! zero-mean constraint for the pure Neumann problem.

// index loops read closer to the element formulas; NaN-rejecting `!(a > b)` is deliberate
#![allow(clippy::needless_range_loop, clippy::excessive_precision, clippy::neg_cmp_op_on_partial_ord)]

pub mod assembly;
pub mod cases;
pub mod diagnostics;
pub mod error;
pub mod linalg;
pub mod mesh;
pub mod operators;
pub mod solver;
pub mod spaces;

pub use error::{Error, Result};

/// Crate version, stamped into every output file.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

// guide chapters, compiled as doctests
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/discretization.md")]
    mod discretization {}
    #[doc = include_str!("../../../book/src/operators.md")]
    mod operators {}
    #[doc = include_str!("../../../book/src/time_stepping.md")]
    mod time_stepping {}
    #[doc = include_str!("../../../book/src/picard.md")]
    mod picard {}
    #[doc = include_str!("../../../book/src/diagnostics.md")]
    mod diagnostics {}
}
