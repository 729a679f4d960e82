use thiserror::Error;

use crate::gmm::Diagnostic;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    /// An operation was applied to the wrong kind of object, e.g. evaluating
    /// an inner approximation through the outer evaluator.
    #[error("usage error: {0}")]
    Usage(String),

    #[error("invariant violation: {0}")]
    Invariant(String),

    #[error("instance failed validation ({} issue(s)): {}", .0.len(), summarize(.0))]
    Validation(Vec<Diagnostic>),

    #[error("certification failed at z = {z}: {reason}")]
    Certification { z: f64, reason: String },

    #[error("sandwich audit failed at sample {index}: {reason}")]
    Audit { index: usize, x: Vec<f64>, reason: String },

    #[error("gradient undefined: {0}")]
    UndefinedGradient(String),

    #[error("metric undefined: {0}")]
    UndefinedMetric(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("model IR error: {0}")]
    Ir(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn summarize(diags: &[Diagnostic]) -> String {
    diags.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("; ")
}
