use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid size: {0}")]
    InvalidSize(String),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("no measurements accumulated")]
    NoMeasurements,
    #[error("empty input: {0}")]
    Empty(String),
    #[error("lag grid mismatch: {0}")]
    LagMismatch(String),
    #[error("too few usable points: need {needed}, have {have}")]
    TooFewPoints { needed: usize, have: usize },
    #[error("no crossing found between any pair of curves")]
    NoCrossing,
    #[error("malformed file {path}: {reason}")]
    Malformed { path: PathBuf, reason: String },
    #[error("checksum mismatch in {path}: header says {expected}, contents hash to {actual}")]
    ChecksumMismatch {
        path: PathBuf,
        expected: String,
        actual: String,
    },
    #[error("grid error: {0}")]
    Grid(String),
    #[error("sink error: {0}")]
    Sink(String),
    #[error("run interrupted at sweep {sweep}; checkpoint written")]
    Interrupted { sweep: u64 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn malformed(path: &std::path::Path, reason: impl Into<String>) -> Error {
    Error::Malformed {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}
