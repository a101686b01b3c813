use thiserror::Error;

use crate::model::NormSpec;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// The input document is not well-formed.
    #[error("syntax error: {0}")]
    Syntax(String),

    /// The document parsed but describes an invalid system.
    #[error("validation error: {0}")]
    Validation(String),

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    /// An enumeration would grow past its configured cap.
    #[error("budget exceeded: {what} would exceed the cap of {cap}")]
    BudgetExceeded { what: &'static str, cap: usize },

    #[error("dimension {dimension} exceeds the cap of {cap} for {what}")]
    DimensionCap {
        what: &'static str,
        dimension: usize,
        cap: usize,
    },

    /// A result was requested whose precondition does not hold.
    #[error("not applicable: {0}")]
    NotApplicable(String),

    #[error("degenerate measure: certified quasi-controllability lower bound is zero")]
    DegenerateMeasure,

    #[error("norm {0} is not supported here")]
    NormUnsupported(NormSpec),
}

pub type Result<T> = std::result::Result<T, Error>;
