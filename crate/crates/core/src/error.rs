use std::fmt;

/// Errors shared by all modules of the crate.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A vector or matrix dimension does not match what the operation requires.
    DimensionMismatch { expected: usize, found: usize },
    /// An input contains NaN or infinite entries.
    NonFinite,
    /// A parameter is outside its admissible range.
    InvalidParameter(String),
    /// A requested rank exceeds what the input dimensions allow.
    RankTooLarge { requested: usize, limit: usize },
    /// The right-hand side is identically zero.
    ZeroRhs,
    /// The operation requires an exact transpose but the operator carries an
    /// unmatched adjoint.
    UnmatchedOperator(&'static str),
    /// A matrix that must have full column rank is rank deficient.
    RankDeficient(&'static str),
    /// An iterative kernel failed to converge within its iteration cap.
    NoConvergence(&'static str),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::DimensionMismatch { expected, found } => {
                write!(f, "dimension mismatch: expected {expected}, found {found}")
            }
            Error::NonFinite => write!(f, "input contains non-finite entries"),
            Error::InvalidParameter(msg) => write!(f, "invalid parameter: {msg}"),
            Error::RankTooLarge { requested, limit } => {
                write!(f, "requested rank {requested} exceeds limit {limit}")
            }
            Error::ZeroRhs => write!(f, "right-hand side is zero"),
            Error::UnmatchedOperator(what) => {
                write!(f, "{what} requires an exact transpose, but the operator adjoint is unmatched")
            }
            Error::RankDeficient(what) => write!(f, "rank deficient matrix in {what}"),
            Error::NoConvergence(what) => write!(f, "{what} did not converge"),
        }
    }
}

impl std::error::Error for Error {}

pub type Result<T> = std::result::Result<T, Error>;
