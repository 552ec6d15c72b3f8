//! Error types shared across the engine.

use crate::pool::Violation;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A caller-supplied value breaks an operation precondition
    /// (budget out of range, dimension mismatch, malformed distribution).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// The pool cannot support kernel resolution: fewer than two samples,
    /// or every pair sits at distance zero.
    #[error("degenerate pool: {0}")]
    DegeneratePool(String),

    /// A combinatorial guard was exceeded (brute-force enumeration,
    /// full-matrix export cap).
    #[error("problem too large: {0}")]
    TooLarge(String),

    /// A file could not be parsed or has an inconsistent layout.
    #[error("format error: {0}")]
    Format(String),

    /// Pool construction rejected the input data.
    #[error("invalid pool: {}", format_violations(.0))]
    InvalidPool(Vec<Violation>),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn invalid_input(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub fn degenerate(msg: impl Into<String>) -> Self {
        Error::DegeneratePool(msg.into())
    }

    pub fn too_large(msg: impl Into<String>) -> Self {
        Error::TooLarge(msg.into())
    }

    pub fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }
}

fn format_violations(violations: &[Violation]) -> String {
    let shown: Vec<String> = violations.iter().take(5).map(|v| v.to_string()).collect();
    let mut out = shown.join("; ");
    if violations.len() > 5 {
        out.push_str(&format!(" (+{} more)", violations.len() - 5));
    }
    out
}
