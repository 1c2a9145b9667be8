use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    Dimension {
        context: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("degenerate feature: vector has zero norm")]
    DegenerateFeature,
    #[error("degenerate center for class {class}: member features sum to zero")]
    DegenerateCenter { class: usize },
    #[error("no center for class {class}")]
    MissingCenter { class: usize },
    #[error("insufficient data: need at least {needed} values, got {got}")]
    InsufficientData { needed: usize, got: usize },
    #[error("degenerate data: all values are equal")]
    DegenerateData,
    #[error("non-finite value in {term}")]
    NonFinite { term: &'static str },
    #[error("invalid config `{field}`: {reason}")]
    Config { field: &'static str, reason: String },
    #[error("AUC is undefined when every sample has the same truth value")]
    UndefinedAuc,
    #[error("empty clean set")]
    EmptyCleanSet,
}

impl Error {
    pub(crate) fn config(field: &'static str, reason: impl Into<String>) -> Self {
        Error::Config {
            field,
            reason: reason.into(),
        }
    }

    /// Whether this error signals a numerical abort rather than bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonFinite { .. }
                | Error::DegenerateFeature
                | Error::DegenerateCenter { .. }
                | Error::DegenerateData
        )
    }
}
