use alloc::string::String;

/// Errors raised by the engine and the model built on it.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// Operand shapes are incompatible.
    #[error("{op}: incompatible shapes {left:?} and {right:?}")]
    Dimension {
        op: &'static str,
        left: [usize; 2],
        right: [usize; 2],
    },
    /// A caller broke an operation's contract (e.g. a non-scalar loss).
    #[error("contract violated: {0}")]
    Contract(String),
    /// The graph is in the wrong state for the request.
    #[error("invalid graph state: {0}")]
    State(String),
    /// A non-finite value was produced or supplied.
    #[error("non-finite value in {0}")]
    Numeric(String),
    /// A configuration or data record failed validation.
    #[error("validation failed: {0}")]
    Validation(String),
    /// Training diverged.
    #[error("loss diverged at epoch {epoch}, batch {batch}")]
    Divergence { epoch: usize, batch: usize },
}

pub type Result<T> = core::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::Validation(msg.into())
}
