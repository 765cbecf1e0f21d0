use std::path::PathBuf;

use thiserror::Error;

/// Every failure the library can report.
#[derive(Debug, Error)]
pub enum Error {
    #[error("vector norm {norm:e} is below the zero-vector threshold")]
    ZeroVector { norm: f64 },
    #[error("matrix is not symmetric (max asymmetry {asymmetry:e})")]
    NotSymmetric { asymmetry: f64 },
    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: String, got: String },
    #[error("view mismatch: {0}")]
    ViewMismatch(String),
    #[error("label {label} out of range [0, {bound})")]
    LabelOutOfRange { label: usize, bound: usize },
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error("point {index} is isolated in the affinity graph")]
    IsolatedPoint { index: usize },
    #[error("sampled crop {height}x{width} is below 1x1")]
    CropTooSmall { height: usize, width: usize },
    #[error("both batch portions are empty")]
    EmptyBatch,
    #[error("malformed {what}: {reason}")]
    Malformed { what: String, reason: String },
    #[error("class partition violated: {0}")]
    PartitionViolation(String),
    #[error("invalid config field `{field}`: {reason}")]
    ConfigInvalid { field: String, reason: String },
    #[error("checkpoint missing or unusable at {path}: {reason}")]
    CheckpointMissing { path: PathBuf, reason: String },
    #[error("i/o error on {path}: {source}")]
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
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn shape(expected: impl Into<String>, got: impl Into<String>) -> Self {
        Error::ShapeMismatch {
            expected: expected.into(),
            got: got.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::ConfigInvalid {
            field: field.into(),
            reason: reason.into(),
        }
    }
}
