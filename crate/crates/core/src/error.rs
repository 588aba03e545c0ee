use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure the toolkit can report.
#[derive(Error, Debug)]
pub enum Error {
    #[error("matrix has no items")]
    EmptyMatrix,
    #[error("non-finite value at flat index {index}")]
    NonFinite { index: usize },
    #[error("shape mismatch: expected {expected}, got {actual}")]
    ShapeMismatch { expected: String, actual: String },
    #[error("row {0} has zero norm")]
    ZeroNormRow(usize),
    #[error("not a distance matrix: {0}")]
    InvalidDistance(String),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("neighborhood too large: t={t}, q={q} needs {needed} items but only {n_items} exist")]
    ParamsTooLarge {
        t: usize,
        q: usize,
        needed: usize,
        n_items: usize,
    },
    #[error("similarity matrix is constant, minmax scaling is undefined")]
    DegenerateSimilarity,
    #[error("index {index} out of range for {n_items} items")]
    IndexOutOfRange { index: usize, n_items: usize },
    #[error("no query has a valid gallery match")]
    NoValidQueries,

    #[error("bad magic bytes {found:?}, expected {expected:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },
    #[error("unsupported format version {0}")]
    UnsupportedVersion(u16),
    #[error("truncated file: expected {expected} bytes, found {actual}")]
    TruncatedFile { expected: u64, actual: u64 },
    #[error("duplicate item index {0}")]
    DuplicateIndex(usize),
    #[error("unknown role {0:?}, expected \"query\" or \"gallery\"")]
    UnknownRole(String),
    #[error("item index {0} is missing from metadata")]
    IndexGap(usize),
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("bad synthetic parameters: {0}")]
    BadParams(String),
    #[error("oracle is limited to {limit} items, got {n_items}")]
    TooLargeForOracle { n_items: usize, limit: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn shape(expected: impl ToString, actual: impl ToString) -> Self {
        Error::ShapeMismatch {
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }
}
