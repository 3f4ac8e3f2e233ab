use thiserror::Error;

/// Error taxonomy shared by the whole crate.
///
/// `Parameter` covers contract violations the caller can fix (bad sizes,
/// out-of-range knobs). `Numeric` marks non-finite data or a computation that
/// lost meaning mid-flight and carries the offending index when known.
#[derive(Debug, Error)]
pub enum CoreError {
    #[error("parameter error: {0}")]
    Parameter(String),

    #[error("numeric error: {what}{}", index.map(|i| format!(" at index {i}")).unwrap_or_default())]
    Numeric { what: String, index: Option<usize> },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, CoreError>;

pub(crate) fn param_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(CoreError::Parameter(msg.into()))
}
