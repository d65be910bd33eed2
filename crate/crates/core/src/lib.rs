//! Solver for the alpha-dissipative Hunter-Saxton equation based on a
//! projection onto piecewise-linear data and exact Lagrangian evolution
//! between breaking times.

pub mod error;
pub mod eulerian;
pub mod evolution;
pub mod experiment;
pub mod lagrangian;
pub mod metrics;
pub mod oracle;
pub mod piecewise;

pub use error::{Error, Result};
