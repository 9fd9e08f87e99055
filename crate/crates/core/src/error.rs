use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = NdrError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum NdrError {
    #[error("dimension error in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("non-finite value produced by {op}")]
    NonFinite { op: &'static str },

    #[error("backward requires a scalar loss, got shape {0:?}")]
    NotScalar(Vec<usize>),

    #[error("loss is detached from every trainable leaf")]
    Detached,

    #[error("invalid argument: {0}")]
    Invalid(String),

    #[error("non-finite gradient for parameter `{name}` at step {step}")]
    NonFiniteGradient { name: String, step: u64 },

    #[error("non-finite loss at step {step} (x reconstruction {x_recon}, y reconstruction {y_recon})")]
    NonFiniteLoss { step: u64, x_recon: f64, y_recon: f64 },

    #[error("incompatible checkpoint: {0}")]
    IncompatibleCheckpoint(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("image codec error for {path}: {detail}")]
    Image { path: PathBuf, detail: String },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl NdrError {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        NdrError::Shape { op, detail: detail.into() }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        NdrError::Io { path: path.into(), source }
    }
}
