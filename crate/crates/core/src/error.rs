use thiserror::Error;

use crate::expr::{DomainError, ParseError};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{pointer}: {source}")]
    Expression {
        pointer: String,
        #[source]
        source: ParseError,
    },

    #[error("invalid system spec at {pointer}: {message}")]
    Spec { pointer: String, message: String },

    #[error(transparent)]
    Domain(#[from] DomainError),

    #[error("dimension mismatch for {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        expected: usize,
        found: usize,
        what: &'static str,
    },

    #[error("empty multi-index")]
    EmptyMultiIndex,

    #[error("field index {index} out of range (family has {count} fields)")]
    InvalidFieldIndex { index: usize, count: usize },

    #[error("cost weight U(x) is not positive definite at {point:?} (smallest eigenvalue {min_eigenvalue:e})")]
    WeightNotPositive { point: Vec<f64>, min_eigenvalue: f64 },

    #[error("integration failed: {0}")]
    Integration(#[from] crate::ode::OdeError),

    #[error("rank {rank} below required {required} at t = {t} (tolerance {tol:e})")]
    RankDeficient {
        t: f64,
        rank: usize,
        required: usize,
        tol: f64,
    },

    #[error("singular-control residual {residual:e} above tolerance at t = {t}")]
    ResidualTooLarge { t: f64, residual: f64 },

    #[error("augmented Goh matrix requested for a parity case that does not use it ({0})")]
    NotAugmenting(&'static str),

    #[error("trajectory and control disagree with the dynamics at grid index {index} (residual {residual:e})")]
    InconsistentTrajectory { index: usize, residual: f64 },

    #[error("Pfaffian: {0}")]
    Pfaffian(&'static str),

    #[error("HJB solver produced a non-finite value at cell ({i}, {j}), t = {t}")]
    NonFinite { i: usize, j: usize, t: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
