//! Crate-wide error type.

use thiserror::Error;

/// Errors surfaced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("unsupported order p = {0}: only p = 1 or even p are defined")]
    UnsupportedOrder(usize),

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("invalid label: {0}")]
    Label(String),

    #[error("training diverged at step {step}: {message}")]
    Training { step: usize, message: String },

    #[error("node budget exceeded at layer {layer}: requires {required} nodes, budget is {budget}")]
    BudgetExceeded {
        layer: usize,
        required: usize,
        budget: usize,
    },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
