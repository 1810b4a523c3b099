use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// The likelihood has no unique finite maximizer for the given counts.
    #[error("model is not identifiable: {0}")]
    Unidentifiable(String),

    /// Newton iterations ran out before the gradient dropped below tolerance.
    /// `last` holds the final (mean-centred) iterate.
    #[error("fit did not converge after {iterations} iterations (max |gradient| = {grad_norm:e})")]
    Convergence {
        iterations: usize,
        grad_norm: f64,
        last: Vec<f64>,
    },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("correlation is undefined for a zero-variance input")]
    UndefinedCorrelation,

    #[error("parse error at line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
