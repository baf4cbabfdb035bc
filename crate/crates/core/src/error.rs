use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("invalid schema: {0}")]
    Schema(String),

    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),

    #[error("duplicate header column `{0}`")]
    DuplicateHeader(String),

    #[error("row {row}, column `{column}`: {message}")]
    Cell {
        row: usize,
        column: String,
        message: String,
    },

    #[error("no records")]
    NoRecords,

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("column `{0}` is entirely missing")]
    FullyMissingColumn(String),

    #[error("dataset has missing values in column `{0}`")]
    MissingValues(String),

    #[error("rule does not cover observed values: {0}")]
    IncompleteRule(String),

    #[error("unknown hyperparameter `{key}` for {generator} generator")]
    UnknownHyperparameter { generator: String, key: String },

    #[error("invalid value for hyperparameter `{key}`: {message}")]
    InvalidHyperparameter { key: String, message: String },

    #[error("external generator: {0}")]
    External(#[from] ExternalError),
}

/// Failures of the subprocess generator protocol.
#[derive(Debug, Error)]
pub enum ExternalError {
    #[error("could not launch `{executable}`: {source}")]
    Launch {
        executable: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("`{command}` exited with status {status}; stderr:\n{stderr}")]
    ExitStatus {
        command: String,
        status: String,
        stderr: String,
    },

    #[error("row count mismatch: expected {expected}, got {actual}")]
    RowCount { expected: usize, actual: usize },

    #[error("malformed output: {0}")]
    MalformedOutput(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn is_external(&self) -> bool {
        matches!(self, Error::External(_))
    }
}
