use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("usage error: {0}")]
    Usage(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("dosage {dosage} outside range [{min}, {max}]")]
    DosageOutOfRange { dosage: f64, min: f64, max: f64 },

    #[error("treatment index {treatment} out of range for {num_treatments} treatments")]
    TreatmentOutOfRange {
        treatment: usize,
        num_treatments: usize,
    },

    #[error("sample index {index} out of range for {len} samples")]
    SampleOutOfRange { index: usize, len: usize },

    #[error("common support violated: no {split} samples received treatment {treatment}")]
    CommonSupport { treatment: usize, split: &'static str },

    #[error("non-finite value {value} at {location}")]
    NonFinite { value: f64, location: String },

    #[error("invalid probability: {0}")]
    InvalidProbability(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("csv parse error at row {row}, column {column}: {message}")]
    CsvParse {
        row: usize,
        column: usize,
        message: String,
    },

    #[error("unsupported format version {found} for {kind} (expected {expected})")]
    FormatVersion {
        kind: &'static str,
        found: u32,
        expected: u32,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error("config parse error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
