use std::io;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("vector must have at least one entry")]
    EmptyVector,

    #[error("non-finite value at index {0}")]
    NonFinite(usize),

    #[error("k out of range: k = {k} but dimension is {d}")]
    SparsityOutOfRange { k: f64, d: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("design matrix is identically zero")]
    ZeroMatrix,

    #[error("objective became non-finite at iteration {iteration}")]
    Divergence { iteration: usize },

    #[error("internal inconsistency: {0}")]
    Internal(String),

    #[error("{path}: line {line}, column {column}: {message}")]
    Parse {
        path: String,
        line: usize,
        column: usize,
        message: String,
    },

    #[error("every grid cell failed; first failure: {0}")]
    GridExhausted(Box<Error>),

    #[error("replication {rep} (seed {seed:#018x}) failed: {source}")]
    Replication {
        rep: usize,
        seed: u64,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
