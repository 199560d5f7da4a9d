use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on `{path}`: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("invalid schema: {0}")]
    InvalidSchema(String),

    #[error("missing column `{0}`")]
    MissingColumn(String),

    #[error("no data rows")]
    MissingData,

    #[error("row {row}: unknown category `{value}` for column `{column}`")]
    UnknownCategory {
        row: usize,
        column: String,
        value: String,
    },

    #[error("row {row}: cannot parse `{column}` as a number")]
    UnparsableNumber { row: usize, column: String },

    #[error("row {row}: {reason}")]
    InvalidRow { row: usize, reason: String },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("prediction failed on row {row}: {reason}")]
    PredictionFailure { row: usize, reason: String },

    #[error("type mismatch: {0}")]
    TypeMismatch(String),

    #[error("malformed rule: {0}")]
    MalformedRule(String),

    #[error("irreparable categorical bounds on group `{group}`")]
    Irreparable { group: String },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("empty training data")]
    EmptyData,

    #[error("no valid rules for this target; try a lower tau or rho")]
    NoValidRules,

    #[error("grid has {count} cells, above the limit of {limit}")]
    CellLimitExceeded { count: u128, limit: usize },

    #[error("impossible grid cell: {0}")]
    ImpossibleCell(String),

    #[error("no test instances to explain")]
    EmptyTestSet,

    #[error("{rows} rows cannot be split into {folds} folds")]
    TooFewRows { rows: usize, folds: usize },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
