//! Shared error type for the whole engine.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, CoreError>;

#[derive(Debug, Error)]
pub enum CoreError {
    /// Shape/dimension disagreement in a tensor operation.
    #[error("dimension error in {op}: {msg}")]
    Shape { op: &'static str, msg: String },

    /// A forward or backward pass produced NaN/Inf.
    #[error("non-finite value in {context}")]
    NonFinite { context: String },

    /// Bad configuration (head count, missing params, scale limits, ...).
    #[error("config error: {0}")]
    Config(String),

    /// API misuse (non-scalar backward root, graph mismatch, ...).
    #[error("usage error: {0}")]
    Usage(String),

    /// Malformed binary container, with the byte offset of the problem.
    #[error("format error at byte {offset}: {msg}")]
    Format { offset: u64, msg: String },

    /// Invalid manifest or dataset content. `line` is 1-based when known.
    #[error("validation error{}: {msg}", line.map(|l| format!(" at line {l}")).unwrap_or_default())]
    Validation { line: Option<usize>, msg: String },

    /// Gradient contained NaN/Inf for the named parameter.
    #[error("non-finite gradient for parameter '{param}'")]
    BadGradient { param: String },

    /// Two forward passes of a supposedly pure function disagreed.
    #[error("non-determinism detected: {0}")]
    NonDeterministic(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("json error{}: {source}", line.map(|l| format!(" at line {l}")).unwrap_or_default())]
    Json {
        line: Option<usize>,
        #[source]
        source: serde_json::Error,
    },
}

impl CoreError {
    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        CoreError::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    pub fn validation(msg: impl Into<String>) -> Self {
        CoreError::Validation {
            line: None,
            msg: msg.into(),
        }
    }

    pub fn validation_at(line: usize, msg: impl Into<String>) -> Self {
        CoreError::Validation {
            line: Some(line),
            msg: msg.into(),
        }
    }
}
