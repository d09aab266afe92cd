//! Configuration-driven experiment runner for `homlab-core`.

pub mod config;
pub mod output;
pub mod runner;

pub use config::{Experiment, ExperimentConfig, RawConfig};
pub use runner::{run, RunOutput, RunReport};

/// Exit status for usage errors detected before any computation.
pub const EXIT_USAGE: i32 = 2;
/// Exit status for solver or I/O failures.
pub const EXIT_FAILURE: i32 = 3;

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    /// Invalid configuration; nothing was computed.
    #[error("usage: {0}")]
    Usage(String),

    #[error("run failed: {0}")]
    Failure(String),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Usage(_) => EXIT_USAGE,
            RunError::Failure(_) => EXIT_FAILURE,
        }
    }
}
