use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid matrix: {0}")]
    InvalidMatrix(String),

    #[error("dense eigensolver did not converge after {0} iterations")]
    NoConvergence(usize),

    #[error("invalid index range {lo}..={hi} for dimension {dim}")]
    InvalidRange { lo: usize, hi: usize, dim: usize },

    #[error("shape mismatch: {0}")]
    InvalidShape(String),

    #[error("all columns are linearly dependent")]
    AllDependent,

    #[error("parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("unknown generator `{0}`")]
    UnknownGenerator(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub(crate) fn shape_err(msg: impl Into<String>) -> Error {
    Error::InvalidShape(msg.into())
}
