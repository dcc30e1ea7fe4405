use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("terminals cannot be connected")]
    Infeasible,
    #[error("{0}")]
    CapExceeded(String),
    #[error("weight overflow")]
    Overflow,
    #[error("vertex {0} is not in the graph")]
    UnknownVertex(u32),
    #[error("index format error: {0}")]
    IndexFormat(String),
    #[error("graph hash mismatch: index built for {expected}, graph is {actual}")]
    HashMismatch { expected: String, actual: String },
    #[error(
        "query has {got} terminals but the index was built for at most {cap}; \
         rebuild the index with a larger l or pass --fallback dw"
    )]
    Capacity { got: usize, cap: usize },
    #[error("invalid decomposition: {0}")]
    InvalidDecomposition(String),
    #[error("invalid query: {0}")]
    InvalidQuery(String),
    #[error("internal invariant violated: {0}")]
    Internal(String),
}

pub type Result<T> = std::result::Result<T, Error>;
