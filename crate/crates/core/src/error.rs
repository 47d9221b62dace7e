//! Error types shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum MtrError {
    /// A caller violated an operation precondition.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A step index fell outside the schedule.
    #[error("step {step} is outside the schedule (total {total} steps)")]
    StepOutOfRange { step: usize, total: usize },

    /// A configuration value failed validation.
    #[error("validation error: {0}")]
    Validation(String),

    /// A configuration file could not be parsed.
    #[error("config parse error: {0}")]
    ConfigParse(String),

    /// An error raised inside a learning run, tagged with the step at which it occurred.
    #[error("run failed at step {step}: {source}")]
    RunFailed {
        step: usize,
        #[source]
        source: Box<MtrError>,
    },

    /// Every run of an experiment failed.
    #[error("experiment failed: all {total} runs aborted or errored")]
    AllRunsFailed { total: usize },

    /// An IO failure, tagged with the path involved.
    #[error("io error at {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl MtrError {
    pub fn invalid(msg: impl Into<String>) -> Self {
        MtrError::InvalidArgument(msg.into())
    }

    pub fn validation(msg: impl Into<String>) -> Self {
        MtrError::Validation(msg.into())
    }

    pub fn at_step(self, step: usize) -> Self {
        MtrError::RunFailed {
            step,
            source: Box::new(self),
        }
    }

    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        MtrError::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, MtrError>;
