use thiserror::Error;

use crate::storage::{FileId, Tid};

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("invalid vector: {0}")]
    InvalidVector(String),

    #[error("filter admits {available} rows but {requested} were requested")]
    InsufficientCandidates { requested: usize, available: usize },

    #[error("unknown page {block} in file {file:?}")]
    UnknownPage { file: FileId, block: u32 },

    #[error("no tuple at {tid:?} in file {file:?}")]
    DanglingTid { file: FileId, tid: Tid },

    #[error("tuple of {size} bytes does not fit in a page with {usable} usable bytes")]
    TupleTooLarge { size: usize, usable: usize },

    #[error("graph infeasible: M={m} cannot fit neighbor lists in one page")]
    GraphInfeasible { m: usize },

    #[error("selection of {requested} rows does not fit the {window}-row sampling window")]
    WindowOverflow { requested: usize, window: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("corrupt file: {0}")]
    Corrupt(String),

    #[error("malformed input: {0}")]
    Malformed(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
