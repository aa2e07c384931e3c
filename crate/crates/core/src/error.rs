use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the engine.
#[derive(Debug, Error)]
pub enum TrustError {
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("non-finite value produced by {op}")]
    NonFinite { op: &'static str },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("format error in {path}{}: {msg}", offset.map(|o| format!(" at byte {o}")).unwrap_or_default())]
    Format {
        path: PathBuf,
        offset: Option<u64>,
        msg: String,
    },

    #[error("dataset has no labels")]
    MissingLabels,

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("training diverged at epoch {epoch}, step {step}: {term} loss is not finite")]
    Diverged {
        epoch: usize,
        step: usize,
        term: String,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl TrustError {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        TrustError::Shape {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        TrustError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, offset: Option<u64>, msg: impl Into<String>) -> Self {
        TrustError::Format {
            path: path.into(),
            offset,
            msg: msg.into(),
        }
    }

    /// Short machine-readable tag used in CLI and FFI diagnostics.
    pub fn kind(&self) -> &'static str {
        match self {
            TrustError::Shape { .. } => "shape",
            TrustError::NonFinite { .. } => "non_finite",
            TrustError::InvalidArgument(_) => "invalid_argument",
            TrustError::Config(_) => "config",
            TrustError::Format { .. } => "format",
            TrustError::MissingLabels => "missing_labels",
            TrustError::Degenerate(_) => "degenerate",
            TrustError::Diverged { .. } => "diverged",
            TrustError::Io { .. } => "io",
            TrustError::Json(_) => "json",
        }
    }
}

pub type Result<T> = std::result::Result<T, TrustError>;
