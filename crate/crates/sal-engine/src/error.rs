use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TupleError {
    #[error("expected {expected} fields, found {found}")]
    FieldCount { expected: usize, found: usize },
    #[error("field {index}: cannot parse `{text}`")]
    BadField { index: usize, text: String },
    #[error("{0}")]
    Invariant(String),
    #[error("header mismatch at column {position} (found {found:?}); expected `{expected}` with an optional trailing Label")]
    Header {
        expected: String,
        position: usize,
        found: Option<String>,
    },
}

impl TupleError {
    pub(crate) fn bad(index: usize, text: &str) -> Self {
        TupleError::BadField {
            index,
            text: text.to_string(),
        }
    }
}

/// Reasons an expression has no value for the current tuple.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("feature not ready")]
    NotReady,
    #[error("division by zero")]
    DivisionByZero,
    #[error("non-finite arithmetic result")]
    NonFinite,
    #[error("operand types do not match")]
    TypeMismatch,
}
