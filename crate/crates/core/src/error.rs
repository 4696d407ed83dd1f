//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by the lpf-core library.
#[derive(Debug, Error)]
pub enum LpfError {
    /// A precondition on an operation's inputs was violated.
    #[error("domain error: {0}")]
    Domain(String),

    /// Tensor shapes disagree (parameters vs. gradients vs. moments).
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    /// The predicate is not in the decoder vocabulary / variable registry.
    #[error("unknown predicate: {0}")]
    UnknownPredicate(String),

    /// An aggregation or conversion was asked to run on zero evidence items.
    #[error("no evidence available")]
    NoEvidence,

    /// Lookup of a record or checkpoint component failed.
    #[error("not found: {0}")]
    NotFound(String),

    /// A persisted file failed to parse; carries the 1-based line number.
    #[error("malformed line {line}: {reason}")]
    MalformedLine { line: usize, reason: String },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serialization(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, LpfError>;
