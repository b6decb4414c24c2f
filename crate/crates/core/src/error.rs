use thiserror::Error;

use crate::estimation::EstimationResult;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// The ordinary S-divergence with `A <= 0` has a `r^A` or `log r` term
    /// that blows up on an empty cell.
    #[error("S-divergence undefined with empty cells (alpha={alpha}, lambda={lambda}, A={a})")]
    EmptyCellUndefined { alpha: f64, lambda: f64, a: f64 },

    #[error("K(delta) undefined at delta = -1 when A = {a} <= 0")]
    KernelDomain { a: f64 },

    #[error("no root found after exhausting the iteration budget")]
    NoConvergence(Box<EstimationResult>),

    #[error("information matrix is numerically singular")]
    SingularInformation,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("all {replicates} replicates failed")]
    AllReplicatesFailed { replicates: usize },

    #[error("surface has no cell for {0}")]
    MissingCells(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("duplicate support point {0}")]
    DuplicateSupportPoint(u64),

    #[error("non-positive count {count} at support point {x}")]
    NonPositiveCount { x: u64, count: i64 },

    #[error("empty dataset")]
    EmptyDataset,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
