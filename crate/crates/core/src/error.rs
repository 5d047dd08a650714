use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("measure has no atoms")]
    EmptyMeasure,

    #[error("invalid measure: {0}")]
    InvalidMeasure(String),

    #[error("index {index} out of range for {what} of length {len}")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        len: usize,
    },

    #[error("map has no assignment for atom {0}")]
    MissingAssignment(usize),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("cost evaluation failed: {0}")]
    Evaluation(String),

    #[error("gradient unavailable: {0}")]
    GradientUnavailable(String),

    #[error("instance too large: {size} product points exceeds cap {cap}")]
    InstanceTooLarge { size: usize, cap: usize },

    #[error("solver failure after {iterations} iterations: {reason}\n{dump}")]
    SolverFailure {
        reason: String,
        iterations: usize,
        dump: String,
    },

    #[error("invalid certificate: dual inequality violated by {violation:e} at {point:?}")]
    CertificateInvalid { point: Vec<usize>, violation: f64 },

    #[error("infeasible plan: {0}")]
    InfeasiblePlan(String),

    #[error("decomposition needs {k} maps, above the cap of {cap}")]
    KCapExceeded { k: usize, cap: usize },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{context}: {source}")]
    Json {
        context: String,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(context: impl Into<String>, source: serde_json::Error) -> Self {
        Error::Json {
            context: context.into(),
            source,
        }
    }
}
