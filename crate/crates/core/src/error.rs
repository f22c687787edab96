use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(String),

    #[error("non-numeric value {value:?} at row {row}, column {column}")]
    NonNumeric {
        row: usize,
        column: String,
        value: String,
    },

    #[error("non-finite value at row {row}, column {column}")]
    NonFinite { row: usize, column: String },

    #[error("unknown column {0:?}")]
    UnknownColumn(String),

    #[error("invalid label {value} at row {row}: labels must be 0 or 1")]
    InvalidLabel { row: usize, value: f64 },

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("invalid partition: {0}")]
    InvalidPartition(String),

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("bin index {bin} out of range for feature {feature} with {n_bins} bins")]
    BinOutOfRange {
        feature: usize,
        bin: usize,
        n_bins: usize,
    },

    #[error("missing feature {0:?}")]
    MissingFeature(String),

    #[error("crypto error: {0}")]
    Crypto(String),

    #[error("ciphertext key mismatch: {0:016x} vs {1:016x}")]
    KeyMismatch(u64, u64),

    #[error("fixed-point overflow: {0}")]
    Overflow(String),

    #[error("buffer parse error at offset {offset}: {reason}")]
    Parse { offset: usize, reason: String },

    #[error("unauthorized: {0}")]
    Unauthorized(String),

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("model format error at line {line}: {reason}")]
    ModelFormat { line: usize, reason: String },

    #[error("config error in {field}: {reason}")]
    Config { field: String, reason: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(offset: usize, reason: impl Into<String>) -> Self {
        Error::Parse {
            offset,
            reason: reason.into(),
        }
    }

    pub(crate) fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }
}
