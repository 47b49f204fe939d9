use thiserror::Error;

/// Errors produced by this crate.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument violated a documented precondition (finiteness, range,
    /// emptiness).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Two arguments have incompatible shapes.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// The geometry is too degenerate for the requested operation, e.g. too
    /// few affinely independent points.
    #[error("degenerate configuration: {0}")]
    Degenerate(String),

    /// An iterative routine failed in a way that cannot be reported as a
    /// diagnostic flag.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// Malformed CSV input; `line` is the 1-based physical line number.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
