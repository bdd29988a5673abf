use std::path::PathBuf;

/// Errors raised by the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("row {row} of kernel for action {action} is not a probability vector (sum = {sum})")]
    NotStochastic { action: usize, row: usize, sum: f64 },

    #[error("value iteration did not converge after {iterations} iterations (residual {residual:e})")]
    NotConverged {
        iterations: usize,
        residual: f64,
        last: Vec<f64>,
    },

    #[error("empty legal-action set")]
    EmptyActionSet,

    #[error("improper prior: {0}")]
    ImproperPrior(String),

    #[error("invalid sampler configuration: {0}")]
    Config(String),

    #[error("design matrix is rank deficient ({rank} < {columns} columns); the posterior is not identified under a flat prior")]
    RankDeficient { rank: usize, columns: usize },

    #[error("rejection sampler exhausted {0} proposals")]
    RejectionExhausted(usize),

    #[error("illegal action: {0}")]
    IllegalAction(String),

    #[error("game is terminated")]
    Terminated,

    #[error("empty posterior")]
    EmptyPosterior,

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
