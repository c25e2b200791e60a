use alloc::string::String;
use core::fmt;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Two operands (or a vector and a model) disagree on length.
    Dimension {
        expected: usize,
        found: usize,
    },
    /// The client's data cannot satisfy the minimum-batch requirement.
    Partition(String),
    /// A gradient set needs at least two local steps.
    GradientSetTooSmall {
        tau: usize,
    },
    /// The convergent/exploratory split does not describe the gradient set.
    Split(String),
    /// Client weights, uploads, or step counts do not line up.
    Aggregation(String),
    /// A direction was requested for a zero-length vector.
    ZeroVector,
    InvalidArgument(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Dimension { expected, found } => {
                write!(f, "dimension mismatch: expected {expected}, found {found}")
            }
            Error::Partition(msg) => write!(f, "partition error: {msg}"),
            Error::GradientSetTooSmall { tau } => {
                write!(f, "gradient set has {tau} steps, at least 2 are required")
            }
            Error::Split(msg) => write!(f, "inconsistent split: {msg}"),
            Error::Aggregation(msg) => write!(f, "aggregation error: {msg}"),
            Error::ZeroVector => f.write_str("zero-norm vector has no direction"),
            Error::InvalidArgument(msg) => write!(f, "invalid argument: {msg}"),
        }
    }
}

impl core::error::Error for Error {}

pub(crate) fn check_len(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::Dimension { expected, found })
    }
}
