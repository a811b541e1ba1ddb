use std::fmt;
use std::path::PathBuf;

use thiserror::Error;

/// Row-level rejection reason.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rejection(String);

impl Rejection {
    pub fn new(reason: impl Into<String>) -> Self {
        Rejection(reason.into())
    }

    pub fn reason(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Rejection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Rejection {}

/// Structural failures while reading an input file. Row-level problems are
/// reported through [`crate::ingest::IngestReport`] instead.
#[derive(Debug, Error)]
pub enum IngestError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: malformed header: {reason}")]
    Header { path: PathBuf, reason: String },
    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("invalid observation window: {0}")]
    Window(String),
}

#[derive(Debug, Error, PartialEq)]
pub enum GlmError {
    #[error("no rows to fit")]
    Empty,
    #[error("need more rows than parameters (n = {n}, p = {p})")]
    TooFewRows { n: usize, p: usize },
    #[error("design matrix is rank deficient (column {column} is collinear)")]
    RankDeficient { column: String },
    #[error("non-finite input: {0}")]
    NonFinite(String),
    #[error("zero standard error for {0}")]
    ZeroStdError(String),
    #[error("exposure must be > 0 (row {0})")]
    NonPositiveExposure(usize),
    #[error("unknown predictor {0:?}")]
    UnknownPredictor(String),
    #[error("duplicate predictor {0:?}")]
    DuplicatePredictor(String),
    #[error("kappa must be >= 0")]
    NegativeKappa,
}

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("no bins")]
    NoBins,
    #[error("no rows")]
    NoRows,
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Error, PartialEq)]
pub enum SynthError {
    #[error("invalid config field {field}: {reason}")]
    Config { field: String, reason: String },
    #[error("kappa must be >= 0")]
    NegativeKappa,
    #[error("exposure must be > 0 for segment {0}")]
    NonPositiveExposure(String),
    #[error("beta has {got} entries, design has {expected}")]
    BetaLength { expected: usize, got: usize },
}

impl SynthError {
    pub fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        SynthError::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }
}
