use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("matrix is not positive definite (pivot {pivot} at column {column})")]
    NotPositiveDefinite { column: usize, pivot: f64 },

    #[error("rank-one downdate breaks positive definiteness at column {column}")]
    DowndateBreaksPositivity { column: usize },

    #[error("diagonal entry of the inverse must be positive, got {0}")]
    NonPositiveDiagonal(f64),

    #[error("zero pivot in abridged solve at index {0}")]
    ZeroPivot(usize),

    #[error("predictive variance factor is not positive ({0})")]
    NonPositiveVariance(f64),

    #[error("covariate matrix is rank deficient")]
    RankDeficient,

    #[error("value {value} lies outside the domain of the {transform} transform")]
    DomainError { transform: &'static str, value: f64 },

    #[error("value {value} lies outside the range of the {transform} transform")]
    RangeError { transform: &'static str, value: f64 },

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("quadrature rule would need more than {cap} nodes")]
    ResourceLimit { cap: usize },

    #[error("sparsification threshold must lie in [0, 1), got {0}")]
    EpsilonTooLarge(f64),

    #[error("weights sum to {0}, expected 1")]
    NotNormalized(f64),

    #[error("quantile level must lie in (0, 1), got {0}")]
    InvalidLevel(f64),

    #[error("could not bracket the quantile at level {level}")]
    BracketFailure { level: f64 },

    #[error("every quadrature node has degenerate evidence")]
    AllWeightsDegenerate,

    #[error("invalid training data: {0}")]
    InvalidData(String),

    #[error("optimization failed: every start returned a non-finite objective")]
    OptimizationFailed,

    #[error("length mismatch: {0} predictions vs {1} truths")]
    LengthMismatch(usize, usize),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    /// Coarse classification used to pick process exit codes and HTTP statuses.
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Config(_) | Error::InvalidParams(_) | Error::EpsilonTooLarge(_) => ErrorKind::Config,
            Error::InvalidLevel(_) | Error::InvalidData(_) | Error::LengthMismatch(..) => ErrorKind::Config,
            Error::Io(_) => ErrorKind::Io,
            _ => ErrorKind::Numerical,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Numerical,
    Io,
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        if e.is_io_error() {
            Error::Io(e.to_string())
        } else {
            Error::InvalidData(e.to_string())
        }
    }
}
