use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A parameter violates its documented domain.
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    /// The requested scale regime cannot produce a usable needlet system.
    #[error("degenerate regime: {0}")]
    Degenerate(String),

    #[error("level {level} has no integer multipole in ({lo}, {hi}); try a larger s0 or a different gamma")]
    EmptyBand { level: usize, lo: f64, hi: f64 },

    #[error("{what} = {value} is outside [{min}, {max}]")]
    OutOfRange {
        what: &'static str,
        value: f64,
        min: f64,
        max: f64,
    },

    #[error("cubature rule of degree {have} is too coarse, degree {needed} is required")]
    InsufficientDegree { needed: usize, have: usize },

    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },

    #[error("covariance is not positive definite (smallest eigenvalue {min_eigenvalue:e})")]
    NotPositiveDefinite { min_eigenvalue: f64 },

    #[error("points {0} and {1} coincide")]
    DuplicatePoints(usize, usize),

    #[error("no admissible resolution level: {0}")]
    NoAdmissibleLevel(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
