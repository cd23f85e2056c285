use alloc::string::String;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// A game specification violates an invariant; `field` is a path such as
    /// `states.prior`.
    #[error("{field}: {message}")]
    Invalid { field: String, message: String },
    #[error("impossible dataset: every state assigns it zero likelihood")]
    ImpossibleDataset,
    #[error("type space has {count} types, above the cap of {cap}")]
    CapExceeded { count: usize, cap: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("operation needs {0}")]
    Unsupported(String),
    #[error("solver failure: {0}")]
    Solver(String),
}

pub type Result<T> = core::result::Result<T, Error>;

pub(crate) fn invalid(field: &str, message: impl Into<String>) -> Error {
    Error::Invalid { field: field.into(), message: message.into() }
}
