use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid config field `{field}`: {reason}")]
    InvalidConfig { field: String, reason: String },

    #[error("config parse error: {0}")]
    ConfigParse(String),

    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: usize, got: usize },

    #[error("protocol violation: {0}")]
    Protocol(String),

    #[error("action {action} outside [0, {cap}]")]
    ActionOutOfRange { action: f64, cap: f64 },

    #[error("replay buffer holds {len} transitions, batch needs {needed}")]
    Underfull { len: usize, needed: usize },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("csv: {0}")]
    Csv(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidConfig {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short machine-friendly tag for the error class.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidConfig { .. } => "invalid_config",
            Error::ConfigParse(_) => "config_parse",
            Error::ShapeMismatch { .. } => "shape_mismatch",
            Error::Protocol(_) => "protocol",
            Error::ActionOutOfRange { .. } => "action_out_of_range",
            Error::Underfull { .. } => "underfull",
            Error::Checkpoint(_) => "checkpoint",
            Error::Csv(_) => "csv",
            Error::Io { .. } => "io",
        }
    }
}
