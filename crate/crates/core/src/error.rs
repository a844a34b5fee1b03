use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, CaimError>;

#[derive(Debug, Error)]
pub enum CaimError {
    /// A caller broke a documented precondition (sizes, ranges, signs).
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    Dimension {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    /// Invariant of a value read from outside (file, config) does not hold.
    #[error("validation failed: {0}")]
    Validation(String),

    #[error("parse error in {path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Refusal to start an exponential computation above its size cap.
    #[error("resource cap: {what} supports n <= {cap}, got n = {n}")]
    ResourceCap {
        what: &'static str,
        cap: usize,
        n: usize,
    },

    #[error("non-finite drift at t = {t} on oscillator {index}")]
    NonFiniteDrift { t: f64, index: usize },

    #[error("metric undefined: {0}")]
    UndefinedMetric(String),

    #[error("interpolation refused: {0}")]
    TooSparse(String),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl CaimError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CaimError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn dim(context: &'static str, expected: usize, got: usize) -> Self {
        CaimError::Dimension {
            context,
            expected,
            got,
        }
    }
}
