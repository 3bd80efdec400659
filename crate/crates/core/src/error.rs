use thiserror::Error;

/// Crate-wide error type.
///
/// `is_validation` distinguishes bad inputs (rejected preconditions, malformed
/// files, inconsistent data) from internal failures such as a solver that
/// violates one of its own postconditions.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("parse error in {path}: {message}")]
    Parse { path: String, message: String },

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("solver failure: {0}")]
    Solver(String),

    #[error("no sampled action within {tolerance:e} of the greedy maximum at state {state}")]
    NoSampledGreedyAction { state: usize, tolerance: f64 },

    #[error("method {method} failed at N={n}, seed={seed}: {source}")]
    MethodRun {
        method: String,
        n: u64,
        seed: u64,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// True for errors caused by caller input (including unusable paths)
    /// rather than internal failure.
    pub fn is_validation(&self) -> bool {
        match self {
            Error::Solver(_) | Error::NoSampledGreedyAction { .. } => false,
            Error::MethodRun { source, .. } => source.is_validation(),
            _ => true,
        }
    }
}
