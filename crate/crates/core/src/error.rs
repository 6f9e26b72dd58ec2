use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("row {row}: {message}")]
    MalformedRow { row: usize, message: String },

    #[error("invalid parameter `{name}`: {message}")]
    InvalidParameter { name: &'static str, message: String },

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("invalid probability map: {0}")]
    InvalidMap(String),

    #[error("probability map does not cover record {0}")]
    Coverage(usize),

    #[error("sampling exceeded the trial cap of {cap} after accepting {accepted} records")]
    TrialCap { cap: u64, accepted: usize },

    #[error("metric undefined: {0}")]
    UndefinedMetric(String),

    #[error("no integer r in ({low:.4}, {high:.4}); adjust lambda")]
    EmptyBandInterval { low: f64, high: f64 },

    #[error("record representation mismatch: {0}")]
    Representation(String),

    #[error("oracle exhausted after {queries} queries: {positives} positive and {negatives} negative pairs collected")]
    OracleExhausted {
        queries: u64,
        positives: usize,
        negatives: usize,
    },

    #[error("EM failed: {0}")]
    EmFailure(String),

    #[error("density underflow (log-density {0:.1}); rescale the data")]
    DensityUnderflow(f64),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn param(name: &'static str, message: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
