//! Numerical laboratory for secant varieties of Kummer varieties.
//!
//! The crate evaluates Riemann theta functions and their directional jets,
//! builds the second-order theta basis and the Kummer map, tests honest and
//! degenerate `(m+2)`-secant configurations by rank, and solves the
//! order-by-order hierarchy that extends a degenerate secant to a formal
//! curve of secants. Every solved order is certified by residuals on a
//! random sample grid.

pub mod error;
pub mod geometry;
pub mod hierarchy;
pub mod kummer;
mod linalg;
mod par;
pub mod run;
pub mod sampling;
pub mod series;
pub mod theta;

pub use error::{Error, Result};
pub use num_complex::Complex64;

/// A point of `ℂ^g`.
pub type CVec = Vec<Complex64>;

/// Crate version stamped into run reports.
pub const ARTIFACT_VERSION: &str = env!("CARGO_PKG_VERSION");
