use thiserror::Error;

pub type Result<T> = std::result::Result<T, OpinsError>;

#[derive(Debug, Error)]
pub enum OpinsError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },

    #[error("zero pivot in ILU(0) at row {0}")]
    ZeroPivot(usize),

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("invalid option: {0}")]
    InvalidOption(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("unsupported Matrix Market format: {0}")]
    Unsupported(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl OpinsError {
    pub(crate) fn dims(msg: impl Into<String>) -> Self {
        OpinsError::DimensionMismatch(msg.into())
    }
}
