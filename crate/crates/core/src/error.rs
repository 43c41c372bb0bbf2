use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid source specification: {0}")]
    InvalidSpec(String),

    #[error("invalid covariance matrix: {0}")]
    InvalidCovariance(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("distortion tuple outside the validity region: {0}")]
    OutOfRegion(String),

    #[error("no closed form available: {0}")]
    NoClosedForm(String),

    #[error("invalid delay: {0}")]
    InvalidDelay(String),

    #[error("unsupported architecture pair: {0}")]
    UnsupportedTransform(String),

    #[error("invalid probability mass function: {0}")]
    InvalidPmf(String),

    #[error("variable sets overlap on index {0}")]
    OverlappingSets(usize),

    #[error("sequence length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),

    #[error("argument out of range: {0}")]
    OutOfRange(String),

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("infeasible problem: {0}")]
    Infeasible(String),

    #[error("unsupported constraint: {0}")]
    UnsupportedConstraint(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
}
