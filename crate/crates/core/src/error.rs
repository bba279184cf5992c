use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("index out of range: ({i}, {j}) for order {n}")]
    IndexOutOfRange { i: usize, j: usize, n: usize },

    #[error("pivot must lie strictly above the diagonal, got ({i}, {j})")]
    NotUpperTriangle { i: usize, j: usize },

    #[error("flat action index {flat} out of range for order {n}")]
    ActionOutOfRange { flat: usize, n: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("matrix entry ({i}, {j}) is not finite")]
    NonFinite { i: usize, j: usize },

    #[error("matrix is not symmetric at ({i}, {j}): deviation {deviation:e}")]
    Asymmetric { i: usize, j: usize, deviation: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("illegal action ({i}, {j}): {reason}")]
    IllegalAction { i: usize, j: usize, reason: &'static str },

    #[error("state is already terminal")]
    AlreadyTerminal,

    #[error("no legal actions in legal mask")]
    EmptyMask,

    #[error("node budget of {budget} exceeded by brute-force search")]
    NodeBudgetExceeded { budget: usize },

    #[error("shape mismatch in {tensor}: expected {expected:?}, got {got:?}")]
    ShapeMismatch { tensor: String, expected: Vec<usize>, got: Vec<usize> },

    #[error("checkpoint version mismatch: expected {expected}, found {found}")]
    CheckpointVersion { expected: u32, found: u32 },

    #[error("corrupt checkpoint: {0}")]
    CorruptCheckpoint(String),

    #[error("replay buffer is empty")]
    EmptyBuffer,

    #[error("{path}:{line}: {msg}")]
    Parse { path: PathBuf, line: usize, msg: String },

    #[error("record {record}: {msg}")]
    BadRecord { record: usize, msg: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("serialization: {0}")]
    Serialize(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// True for errors caused by bad input data rather than bad usage or
    /// runtime failure.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            Error::NonFinite { .. }
                | Error::Asymmetric { .. }
                | Error::Parse { .. }
                | Error::BadRecord { .. }
                | Error::CheckpointVersion { .. }
                | Error::CorruptCheckpoint(_)
                | Error::ShapeMismatch { .. }
        )
    }
}
