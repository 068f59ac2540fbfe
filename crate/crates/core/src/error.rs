use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the detection pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("file not found: {}", .0.display())]
    FileNotFound(PathBuf),
    #[error("unsupported image format in {}: {reason}", path.display())]
    UnsupportedFormat { path: PathBuf, reason: String },
    #[error("corrupt image data in {}: {reason}", path.display())]
    CorruptData { path: PathBuf, reason: String },
    #[error("invalid image: {0}")]
    InvalidImage(String),
    #[error("patch side {side} too large for a {width}x{height} image")]
    PatchTooLarge {
        side: usize,
        width: usize,
        height: usize,
    },
    #[error("invalid patch side {0} (minimum is 8)")]
    PatchTooSmall(usize),
    #[error("input contains NaN or infinite values")]
    NonFiniteInput,
    #[error("shape mismatch: expected {expected}, got {actual}")]
    ShapeMismatch { expected: String, actual: String },
    #[error("length mismatch: expected {expected} entries, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("empty input")]
    EmptyInput,
    #[error("banding map has zero size")]
    EmptyMap,
    #[error("ranking metric needs both classes; only label {0} present")]
    SingleClass(u8),
    #[error("degenerate dataset: {0}")]
    DegenerateDataset(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("unknown background kind `{0}`")]
    UnknownKind(String),
    #[error("model file version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u16, expected: u16 },
    #[error("model file checksum mismatch")]
    ChecksumMismatch,
    #[error("malformed model file: {0}")]
    BadModelFile(String),
    #[error("malformed manifest {}: line {line}: {reason}", path.display())]
    BadManifest {
        path: PathBuf,
        line: usize,
        reason: String,
    },
    #[error("malformed score table {}: {reason}", path.display())]
    BadScoreTable { path: PathBuf, reason: String },
    #[error("I/O error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn shape(expected: impl ToString, actual: impl ToString) -> Self {
        Error::ShapeMismatch {
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
