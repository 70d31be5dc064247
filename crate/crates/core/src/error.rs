use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A physical quantity outside its admissible range.
    #[error("domain error: {0}")]
    Domain(String),

    /// Invalid or inconsistent configuration. The string names the offending field.
    #[error("invalid configuration `{field}`: {reason}")]
    Config { field: String, reason: String },

    /// Array shapes that do not line up.
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite sample at flat index {0}")]
    NonFinite(usize),

    /// An estimator could not produce a result from the data it was given.
    #[error("estimation failed: {0}")]
    Estimation(String),

    /// A statistic is undefined for the sample (zero variance, all-zero differences, ...).
    #[error("degenerate sample: {0}")]
    Degenerate(String),

    #[error("tensor format error in {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A manifest whose records break the dataset invariants.
    #[error("invalid manifest: {0}")]
    Manifest(String),

    /// Prediction ids that do not match the manifest's test split.
    #[error("prediction ids do not match the manifest: {} missing, {} unexpected", missing.len(), unexpected.len())]
    IdMismatch {
        missing: Vec<String>,
        unexpected: Vec<String>,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by user-supplied configuration rather than data or I/O.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config { .. } | Error::Domain(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
