use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("missing header row")]
    MissingHeader,

    #[error("p-value file has no `# z=<int>` line before the header")]
    MissingZ,

    #[error("invalid z line `{0}`")]
    InvalidZ(String),

    #[error("row {row} (line {line}): expected {expected} fields, found {found}")]
    Ragged {
        row: usize,
        line: usize,
        expected: usize,
        found: usize,
    },

    #[error("row {row} (line {line}), column {column}: cannot parse `{value}` as a number")]
    Parse {
        row: usize,
        line: usize,
        column: String,
        value: String,
    },

    #[error("row {row}, column {column}: non-finite value {value}")]
    NonFinite {
        row: usize,
        column: String,
        value: f64,
    },

    #[error("row {row}, column {column}: p-value {value} is not on the grid k/{denominator}")]
    OffGrid {
        row: usize,
        column: String,
        value: f64,
        denominator: u64,
    },

    #[error("duplicate node id `{0}`")]
    DuplicateNodeId(String),

    #[error("invalid identifier `{0}`: ids must be non-empty and contain no commas or newlines")]
    InvalidId(String),

    #[error("matrix shape: {0}")]
    Shape(String),

    #[error("node ids differ at column {index}: background `{background}`, test `{test}`")]
    NodeMismatch {
        index: usize,
        background: String,
        test: String,
    },

    #[error("node count differs: background has {background}, test has {test}")]
    NodeCountMismatch { background: usize, test: usize },

    #[error("alpha must lie in (0, 1), got {0}")]
    InvalidAlpha(f64),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid subset: {0}")]
    InvalidSubset(String),

    #[error("exhaustive scan limited to {limit}x{limit}, got {rows}x{cols}")]
    DimensionGuard {
        rows: usize,
        cols: usize,
        limit: usize,
    },

    #[error("{0} must not be empty")]
    Empty(&'static str),

    #[error("pool has {available} `{label}` samples, {needed} needed")]
    InsufficientPool {
        label: String,
        needed: usize,
        available: usize,
    },

    #[error("unknown label `{0}` (expected normal, non_creative, creative or inconclusive)")]
    UnknownLabel(String),

    #[error("labels: {0}")]
    Labels(String),

    #[error("pca: {0}")]
    Pca(String),

    #[error("serialization: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
