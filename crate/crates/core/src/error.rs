use std::path::PathBuf;

use thiserror::Error;

/// Broad failure category, used by the CLI and the C ABI to pick exit/status codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Estimation,
    Io,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("column `{0}` not found in data header")]
    MissingColumn(String),

    #[error("non-binary {role} value `{value}` at data row {row}")]
    NonBinary {
        role: &'static str,
        row: usize,
        value: String,
    },

    #[error("unparseable numeric value `{value}` in column `{column}` at data row {row}")]
    ParseNumeric {
        column: String,
        row: usize,
        value: String,
    },

    #[error("missing value in column `{column}` at data row {row}")]
    MissingValue { column: String, row: usize },

    #[error("column `{0}` has no non-missing values")]
    AllMissing(String),

    #[error("categorical column `{column}` has {levels} levels (limit {limit})")]
    TooManyLevels {
        column: String,
        levels: usize,
        limit: usize,
    },

    #[error("frame is empty after applying the missing-data policy")]
    EmptyFrame,

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("stratum `{label}` has {rows} rows, fewer than the minimum {min}")]
    StratumTooSmall {
        label: String,
        rows: usize,
        min: usize,
    },

    #[error("invalid learner specification: {0}")]
    InvalidLearner(String),

    #[error("model expects {expected} feature columns, got {actual}")]
    ColumnCountMismatch { expected: usize, actual: usize },

    #[error("model fitting failed: {0}")]
    FitFailed(String),

    #[error("fold {fold} lacks a treated or untreated unit; use fewer folds")]
    FoldImbalance { fold: usize },

    #[error("delta {requested} is not on the grid (nearest grid point: {nearest})")]
    DeltaNotOnGrid { requested: f64, nearest: f64 },

    #[error("invalid delta grid: {0}")]
    InvalidGrid(String),

    #[error("influence matrix and curve do not share a grid")]
    GridMismatch,

    #[error("invalid bootstrap configuration: {0}")]
    InvalidBootstrap(String),

    #[error("invalid data-generating process: {0}")]
    InvalidDgp(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Config(_) | Error::MissingColumn(_) | Error::InvalidLearner(_) => {
                ErrorKind::Config
            }
            Error::InvalidGrid(_) | Error::InvalidBootstrap(_) | Error::DeltaNotOnGrid { .. } => {
                ErrorKind::Config
            }
            Error::NonBinary { .. }
            | Error::ParseNumeric { .. }
            | Error::MissingValue { .. }
            | Error::AllMissing(_)
            | Error::TooManyLevels { .. }
            | Error::EmptyFrame
            | Error::InvalidData(_)
            | Error::LengthMismatch { .. }
            | Error::StratumTooSmall { .. }
            | Error::Csv(_) => ErrorKind::Data,
            Error::ColumnCountMismatch { .. }
            | Error::FitFailed(_)
            | Error::FoldImbalance { .. }
            | Error::GridMismatch
            | Error::InvalidDgp(_) => ErrorKind::Estimation,
            Error::Io { .. } | Error::Json(_) => ErrorKind::Io,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
