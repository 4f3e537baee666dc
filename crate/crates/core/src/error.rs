use thiserror::Error;

/// Errors shared across the crate.
#[derive(Debug, Error)]
pub enum CoreError {
    #[error("malformed group spec: {0}")]
    BadSpec(String),

    #[error("graph is not connected (vertex {0} unreachable from basepoint)")]
    Disconnected(u32),

    #[error("malformed graph file at line {line}: {msg}")]
    BadGraphFile { line: usize, msg: String },

    #[error("malformed pieces file at line {line}: {msg}")]
    BadPiecesFile { line: usize, msg: String },

    #[error("vertex {0} out of range (graph has {1} vertices)")]
    BadVertex(u32, u32),

    #[error("p must be > 1, got {0}")]
    BadExponent(f64),

    #[error("mismatched p: {0} vs {1}")]
    MismatchedP(f64, f64),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("piece system invalid: {0}")]
    BadPieces(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, CoreError>;
