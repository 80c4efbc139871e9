use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum FragError {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// The inputs do not satisfy a documented precondition.
    #[error("precondition failed: {0}")]
    Precondition(String),

    /// The operation is not defined for this variant of the input.
    #[error("unsupported: {0}")]
    Unsupported(String),

    /// An iteration did not reach its tolerance.
    #[error("no convergence after {iterations} iterations (last change {last_change:.3e}): {context}")]
    Convergence {
        iterations: usize,
        last_change: f64,
        context: String,
    },

    /// Overflow, underflow, a singular system or an ill-conditioned fit.
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl FragError {
    /// True for errors caused by the caller's input rather than by the numerics.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            FragError::Domain(_) | FragError::Precondition(_) | FragError::Unsupported(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, FragError>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(FragError::Domain(msg.into()))
}

pub(crate) fn precondition<T>(msg: impl Into<String>) -> Result<T> {
    Err(FragError::Precondition(msg.into()))
}

pub(crate) fn numerical<T>(msg: impl Into<String>) -> Result<T> {
    Err(FragError::Numerical(msg.into()))
}
