use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("division by zero")]
    DivisionByZero,
    #[error("pole of order {actual} exceeds the requested window starting at {lo}")]
    PoleOrder { lo: i64, actual: i64 },
    #[error("constant term violation: {0}")]
    ConstantTerm(String),
    #[error("regularity failure: {0}")]
    Regularity(String),
    #[error("degenerate weights: {0}; re-draw the weights")]
    Degenerate(String),
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("identity check failed: {0}")]
    Check(String),
}

pub type Result<T> = std::result::Result<T, Error>;
