use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the library's operations.
#[derive(Debug, Error)]
pub enum Error {
    #[error("unreadable image {path}: {reason}")]
    UnreadableImage { path: PathBuf, reason: String },

    #[error("unsupported image format {path}: {detail} (expected 8-bit gray or RGB)")]
    UnsupportedBitDepth { path: PathBuf, detail: String },

    #[error("matrix is singular (det = {det:e})")]
    SingularMatrix { det: f64 },

    #[error("degenerate camera pose: {0}")]
    DegeneratePose(String),

    #[error("invalid camera pose: {0}")]
    InvalidPose(String),

    #[error("temporal window too short: got {got} frames, need {need}")]
    WindowTooShort { got: usize, need: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("parse error at {path}:{line}: {reason}")]
    Parse {
        path: PathBuf,
        line: u64,
        reason: String,
    },

    #[error("empty sequence")]
    EmptySequence,

    #[error("corrupt container: {0}")]
    CorruptContainer(String),

    #[error("inconsistent counts: tp={tp}, gt={gt}, dt={dt}")]
    InconsistentCounts { tp: usize, gt: usize, dt: usize },

    #[error("invalid scene spec: {0}")]
    InvalidSpec(String),

    #[error("image encoding failed: {0}")]
    Encode(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
