use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A parameter violated its documented domain or invariant.
    #[error("invalid parameter `{name}`: {detail}")]
    InvalidParam { name: &'static str, detail: String },

    /// An estimator had nothing to chew on (zero starts, zero accidentals,
    /// empty coincidence window).
    #[error("insufficient statistics: {0}")]
    InsufficientStatistics(String),

    /// A linear system or curvature matrix could not be solved.
    #[error("singular system: {0}")]
    Singular(String),

    /// A fit terminated without satisfying its convergence criteria.
    #[error("fit did not converge: {0}")]
    NonConvergence(String),

    /// Malformed input data (stream files, fit problem records).
    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn invalid(name: &'static str, detail: impl Into<String>) -> Self {
        Error::InvalidParam {
            name,
            detail: detail.into(),
        }
    }
}
