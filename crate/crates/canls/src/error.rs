//! Error type shared across the crate.

use core::fmt;

/// Errors produced by detector construction and evaluation.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A constructor argument violated a documented invariant.
    /// The payload names the violated requirement.
    InvalidParameter(&'static str),
    /// The measurement vector is empty or identically zero where a nonzero
    /// vector is required (e.g. normalizing a test statistic).
    EmptyMeasurement,
    /// A subset search was requested with fewer candidates than targets.
    SupportTooSmall { have: usize, need: usize },
    /// The corrected-AIC penalty is undefined because the sample count does
    /// not exceed the parameter count (`n - 3k - 1 <= 0`).
    AiccUndefined { n: usize, k: usize },
    /// An exhaustive enumeration would exceed the configured subset budget.
    BudgetExceeded { subsets: u128, limit: u128 },
    /// A linear system arising in least squares was numerically singular
    /// even after regularization.
    SingularSystem,
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidParameter(what) => write!(f, "invalid parameter: {what}"),
            Error::EmptyMeasurement => write!(f, "measurement vector is empty or zero"),
            Error::SupportTooSmall { have, need } => {
                write!(f, "support too small: {have} candidates for {need} targets")
            }
            Error::AiccUndefined { n, k } => {
                write!(f, "AICc undefined for n = {n}, k = {k} (n - 3k - 1 <= 0)")
            }
            Error::BudgetExceeded { subsets, limit } => {
                write!(f, "subset budget exceeded: {subsets} > {limit}")
            }
            Error::SingularSystem => write!(f, "singular least squares system"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for Error {}

pub type Result<T> = core::result::Result<T, Error>;
