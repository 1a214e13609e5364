use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot access {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("row {row}, column `{column}`: cannot parse `{value}` as a number")]
    NonNumeric {
        row: usize,
        column: String,
        value: String,
    },

    #[error("row {row}: label {label} is out of range for {class_count} classes")]
    LabelOutOfRange {
        row: usize,
        label: usize,
        class_count: usize,
    },

    #[error("missing column `{0}`")]
    MissingColumn(String),

    #[error("dataset has no labels")]
    MissingLabels,

    #[error("empty input")]
    Empty,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("invalid prior: {0}")]
    InvalidPrior(String),

    #[error("invalid probability matrix: {0}")]
    InvalidProbabilities(String),

    #[error("class {class} has zero prior")]
    ZeroPrior { class: usize },

    #[error("row {row}: likelihood-ratio denominator {value:e} is not positive")]
    DegenerateRow { row: usize, value: f64 },

    #[error("restart {restart}: non-finite loss at iteration {iteration}")]
    NonFiniteLoss { restart: usize, iteration: usize },

    #[error("every training restart failed; last error: {0}")]
    AllRestartsFailed(Box<Error>),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("variant `{variant}`, size {size}, repeat {repeat}: {source}")]
    Sweep {
        variant: String,
        size: usize,
        repeat: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
