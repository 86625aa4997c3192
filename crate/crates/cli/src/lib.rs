//! Command-line driver for fermionic quantum walks coupled to a bosonic
//! reservoir: experiment configuration, runners, outputs and the acceptance
//! checks.

use std::fmt;

use fqw_core::error::Error;

pub mod acceptance;
pub mod config;
pub mod output;
pub mod run;

#[derive(Debug)]
pub enum Failure {
    Core(Error),
    Io(String),
    /// Acceptance criteria that did not pass.
    Acceptance(Vec<usize>),
}

pub type Result<T> = std::result::Result<T, Failure>;

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Core(e) => write!(f, "{e}"),
            Failure::Io(msg) => write!(f, "i/o error: {msg}"),
            Failure::Acceptance(ids) => write!(f, "acceptance criteria failed: {ids:?}"),
        }
    }
}

impl std::error::Error for Failure {}

impl Failure {
    /// 2 for invalid input, 3 for budget refusals, 4 for violated
    /// hypotheses, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Core(e) => match e {
                Error::Config(_)
                | Error::InvalidSite { .. }
                | Error::LengthMismatch { .. }
                | Error::DimensionMismatch { .. }
                | Error::NotUnitary { .. }
                | Error::NotHermitian { .. }
                | Error::DegeneracyAmbiguity { .. }
                | Error::DegenerateCoupling
                | Error::InvalidThermal(_)
                | Error::Kernel(_)
                | Error::NotDiagonalSymbol(_)
                | Error::InvalidDensity(_)
                | Error::Unsupported(_) => 2,
                Error::BudgetExceeded { .. } | Error::CombinatorialBudget(_) => 3,
                Error::HypothesisViolation(_) => 4,
                Error::ClassificationAmbiguity { .. } | Error::Numerical(_) => 1,
            },
            Failure::Io(_) | Failure::Acceptance(_) => 1,
        }
    }
}
