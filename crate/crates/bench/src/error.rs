use std::path::PathBuf;

use caim_core::CaimError;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, BenchError>;

#[derive(Debug, Error)]
pub enum BenchError {
    /// One or more config fields are invalid; the message lists all of them.
    #[error("invalid config: {0}")]
    Config(String),

    #[error("cannot read {path}: {message}")]
    ConfigParse { path: PathBuf, message: String },

    #[error("bundle has no {0} series to plot")]
    MissingSeries(&'static str),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error on {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error(transparent)]
    Core(#[from] CaimError),
}

impl BenchError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        BenchError::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code: 2 for config problems, 3 for resource caps, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            BenchError::Config(_) | BenchError::ConfigParse { .. } => 2,
            BenchError::Core(CaimError::Validation(_) | CaimError::Parse { .. }) => 2,
            BenchError::Core(CaimError::ResourceCap { .. }) => 3,
            _ => 1,
        }
    }
}
