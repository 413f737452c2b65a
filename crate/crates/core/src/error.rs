use thiserror::Error;

/// Errors produced by the rffq library.
#[derive(Debug, Error)]
pub enum Error {
    /// Argument lies outside the support or admissible range of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A density was evaluated at an endpoint where it diverges.
    #[error("density is unbounded at {0}")]
    Unbounded(f64),

    /// The joint law collapses onto the diagonal (rho = 1 or sigma below threshold).
    #[error("degenerate joint law: sigma = {sigma:e}")]
    Degenerate { sigma: f64 },

    #[error("invalid input: {0}")]
    Input(String),

    #[error("Lloyd iteration did not converge after {iterations} iterations (last change {change:e})")]
    NoConvergence { iterations: usize, change: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// Two sketches or feature rows were produced by different feature streams.
    #[error("feature stream mismatch: {0}")]
    StreamMismatch(String),

    #[error("corrupt sketch: {0}")]
    CorruptSketch(String),

    #[error("matrix is not symmetric (relative asymmetry {0:e})")]
    NotSymmetric(f64),

    #[error("matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
