use thiserror::Error;

/// Errors raised by the estimators and their supporting routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum SaeError {
    /// Input violates a documented precondition (shape, range, finiteness).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// `XᵀX + S` is not numerically positive definite.
    #[error("ill-posed penalty: {0}")]
    IllPosedPenalty(String),

    /// A contingency table has an empty row or column.
    #[error("degenerate margin: {0}")]
    DegenerateMargin(String),
}

pub type Result<T, E = SaeError> = std::result::Result<T, E>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(SaeError::InvalidInput(msg.into()))
}
