//! Adaptive internal-model output regulation.
//!
//! The crate builds regulators of the form "internal model + adaptive
//! observer + high-gain stabilizer" for plants whose steady-state input
//! generator is linear up to output injection, closes the loop around a
//! plant/exosystem pair, and provides the diagnostics needed to check the
//! structural claims behind the design numerically.

// Index loops mirror the matrix notation; `!(a <= b)` is used on purpose
// so that NaN fails the check.
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod closed_loop;
pub mod model;
pub mod numerics;
pub mod regulator;
pub mod scalar;

pub use scalar::Real;

/// Double-precision matrix.
pub type Mat = numerics::Matrix<f64>;
/// Double-precision trajectory.
pub type Traj = numerics::Trajectory<f64>;
