use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NnError {
    /// Operand shapes are incompatible. `axes` names the offending dimensions.
    #[error("{op}: dimension mismatch on {axes}: expected {expected:?}, got {got:?}")]
    Dimension {
        op: &'static str,
        axes: String,
        expected: Vec<usize>,
        got: Vec<usize>,
    },
    #[error("{op}: invalid configuration: {reason}")]
    Config { op: &'static str, reason: String },
    #[error("usage error: {0}")]
    Usage(String),
}

pub type Result<T> = std::result::Result<T, NnError>;

pub(crate) fn dim_err(
    op: &'static str,
    axes: impl Into<String>,
    expected: &[usize],
    got: &[usize],
) -> NnError {
    NnError::Dimension {
        op,
        axes: axes.into(),
        expected: expected.to_vec(),
        got: got.to_vec(),
    }
}
