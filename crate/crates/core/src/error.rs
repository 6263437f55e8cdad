use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    #[error("row {row}: expected {expected} fields, found {found}")]
    RaggedRow {
        row: usize,
        expected: usize,
        found: usize,
    },

    #[error("duplicate column name {0:?}")]
    DuplicateColumn(String),

    #[error("invalid column name {0:?}")]
    InvalidColumnName(String),

    #[error("column {name:?} has {found} rows, frame has {expected}")]
    ColumnLength {
        name: String,
        expected: usize,
        found: usize,
    },

    #[error("column {0:?} not found")]
    MissingColumn(String),

    #[error("column {name:?}: expected {expected} column, found {found}")]
    ColumnKind {
        name: String,
        expected: &'static str,
        found: &'static str,
    },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("split plan error: {0}")]
    Split(String),

    #[error("outcome error: {0}")]
    Outcome(String),

    #[error("design error: {0}")]
    Design(String),

    #[error("prepare error: {0}")]
    Prepare(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("plan format error: {0}")]
    PlanFormat(String),

    #[error("unsupported plan format version {found} (expected {expected})")]
    PlanVersion { found: String, expected: u32 },

    #[error("plan checksum mismatch: stored {stored}, computed {computed}")]
    PlanChecksum { stored: String, computed: String },

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
