//! Config-driven experiment harness for the adaptive regulator: single
//! closed-loop runs with diagnostics, gain sweeps, CSV export and plot
//! scripts.

// `!(a <= b)` is used on purpose so that NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod experiment;
pub mod output;
pub mod sweep;

pub use config::{ConfigError, ExperimentConfig, Overrides, StartMode};
pub use experiment::{run_experiment, RunError, RunOutcome, RunStatus, RunSummary, Setup};
pub use sweep::{run_sweep, SweepPoint, SweepReport, SweepRow};

/// Process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum ExitCode {
    Success = 0,
    /// Regulation or boundedness threshold missed.
    ThresholdFailure = 1,
    /// Integration broke down (or outputs could not be written).
    IntegrationFailure = 2,
    ConfigError = 3,
}

impl From<ExitCode> for std::process::ExitCode {
    fn from(c: ExitCode) -> Self {
        std::process::ExitCode::from(c as u8)
    }
}
