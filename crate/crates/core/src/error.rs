use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("matrix is not positive semidefinite: pivot {pivot} has value {value:e}")]
    NotPositiveSemidefinite { pivot: usize, value: f64 },

    #[error("design matrix is rank deficient: column {column} is collinear with the preceding columns")]
    RankDeficient { column: usize },

    #[error("weak first stage: |first stage| = {first_stage:e} is within tolerance {tolerance:e}")]
    WeakFirstStage { first_stage: f64, tolerance: f64 },

    #[error("degenerate weights: {0}")]
    DegenerateWeights(String),

    #[error("degenerate instrument: {0}")]
    DegenerateInstrument(String),

    #[error("degenerate fit in {learner}: {reason}")]
    DegenerateFit { learner: String, reason: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("quadrature failed to converge on [{lo}, {hi}]: {unresolved} subintervals above tolerance (estimate {estimate})")]
    Quadrature {
        lo: f64,
        hi: f64,
        unresolved: usize,
        estimate: f64,
    },

    #[error("insufficient data: {0}")]
    Insufficient(String),

    #[error("I/O error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("CSV error at {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("JSON error at {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("malformed table {path}: {reason}")]
    Table { path: PathBuf, reason: String },
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }
}
