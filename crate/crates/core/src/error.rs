use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-finite value at position {index}")]
    NonFinite { index: usize },

    #[error("vector is not unit length (norm {norm})")]
    NotUnit { norm: f64 },

    #[error("cannot normalize a zero vector")]
    ZeroVector,

    #[error("matrix is identically zero")]
    ZeroMatrix,

    #[error("sketch holds no data")]
    ZeroSketch,

    #[error("power iteration did not converge after {iters} iterations (relative residual {residual:e})")]
    NoConvergence { iters: usize, residual: f64 },

    #[error("top eigenvalue is not separated: lambda1 = {lambda1}, lambda2 = {lambda2}")]
    DegenerateGap { lambda1: f64, lambda2: f64 },

    #[error("entry {value} at row {row}, column {col} is outside the 2^-{bits}..2^{bits} range")]
    OutOfRange {
        row: usize,
        col: usize,
        value: f64,
        bits: u32,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("malformed stream file: {0}")]
    Format(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
