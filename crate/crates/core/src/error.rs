use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("zero extent: all points coincide")]
    ZeroExtent,
    #[error("empty point cloud")]
    EmptyCloud,
    #[error("point {index} has a zero-length normal")]
    ZeroNormal { index: usize },
    #[error("index {index} out of range for {len} points")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("segment {0} is empty")]
    EmptySegment(usize),
    #[error("invalid labels: {0}")]
    InvalidLabels(String),
    #[error("invalid primitive: {0}")]
    InvalidPrimitive(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("degenerate composition after {attempts} attempts")]
    DegenerateComposition { attempts: usize },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("embedding row count {rows} does not match cloud size {points}")]
    RowMismatch { rows: usize, points: usize },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("backend not tunable")]
    NotTunable,
    #[error("non-finite loss at epoch {epoch}, shape {shape}")]
    NonFiniteLoss { epoch: usize, shape: usize },
    #[error("point {0} is already clicked")]
    DuplicateClick(usize),
    #[error("point {0} is not clicked")]
    NotClicked(usize),
    #[error("no positive clicks")]
    NoPositives,
    #[error("nothing to undo")]
    NothingToUndo,
    #[error("empty report")]
    EmptyReport,
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
