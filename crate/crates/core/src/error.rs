use thiserror::Error;

/// Errors raised by the OSBM library.
#[derive(Debug, Error)]
pub enum OsbmError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("line {line}: vertex id {id} out of range for n={n}")]
    VertexRange { line: usize, id: usize, n: usize },

    #[error("line {line}: self-loop on vertex {vertex}")]
    SelfLoop { line: usize, vertex: usize },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("capacity exceeded: {0}")]
    Capacity(String),

    #[error("internal numerical error: {0}")]
    Numerical(String),

    #[error("invalid field `{field}`: {message}")]
    InvalidField { field: String, message: String },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, OsbmError>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(OsbmError::Domain(msg.into()))
}
