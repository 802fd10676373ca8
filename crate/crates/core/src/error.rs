use thiserror::Error;

use crate::diffcore::DiffError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Diff(#[from] DiffError),
    /// An invalid hyperparameter or data shape supplied by the caller.
    #[error("configuration error: {0}")]
    Config(String),
    /// Inputs that violate an operation's preconditions.
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("prototype bank used before initialization")]
    Uninitialized,
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: {message}")]
    Validation { line: usize, message: String },
    #[error("degenerate task: {0}")]
    DegenerateTask(String),
    #[error("rate undefined: no samples with y={y}, s={s}")]
    EmptyCell { y: u8, s: u8 },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
