//! Dense linear algebra, fixed-step integration, finite differences,
//! quadrature and the Lyapunov solver.

mod diff;
mod linalg;
mod lyapunov;
mod ode;
mod quad;

pub use diff::{directional_derivative, DEFAULT_H_REL};
pub use linalg::Matrix;
pub use lyapunov::{lyapunov_residual, solve_lyapunov};
pub use ode::{rk4_step, simulate, IntegrationError, Recorder, Rk4, Trajectory};
pub use quad::{adaptive_simpson, QuadratureError};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NumericsError {
    #[error("{op}: dimension mismatch {left:?} vs {right:?}")]
    DimensionMismatch {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("matrix is singular to working precision")]
    Singular,
    #[error("{0}: non-finite value")]
    NonFinite(&'static str),
    #[error("{0}: iteration did not converge")]
    NoConvergence(&'static str),
    #[error("matrix is not Hurwitz: eigenvalue {re} + {im}i has non-negative real part")]
    NotHurwitz { re: f64, im: f64 },
}
