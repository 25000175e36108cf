//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("mesh parse error at line {line}: {msg}")]
    MeshParse { line: usize, msg: String },

    #[error("mesh invariant violated: {0}")]
    MeshInvariant(String),

    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("factorization failed: {0}")]
    Factorization(String),

    #[error("structural error: {0}")]
    Structural(String),

    #[error("did not converge: {0}")]
    NonConvergence(String),

    #[error("rank deficiency: mode {mode} has eigenvalue ratio {ratio:.3e}; reduce the basis size")]
    RankDeficient { mode: usize, ratio: f64 },

    #[error("training error at epoch {epoch}: {msg}")]
    Training { epoch: usize, msg: String },

    #[error("parameter {index} = {value} outside bounds [{lo}, {hi}]")]
    OutOfBounds {
        index: usize,
        value: f64,
        lo: f64,
        hi: f64,
    },

    #[error("format error: {0}")]
    Format(String),

    #[error("hash mismatch for {what}: expected {expected}, got {got}")]
    HashMismatch {
        what: &'static str,
        expected: String,
        got: String,
    },

    #[error("missing artifact: {0}")]
    MissingArtifact(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
