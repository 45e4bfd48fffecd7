use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("tensor is not symmetric: max asymmetry {asymmetry:e} exceeds tolerance {tolerance:e}")]
    SymmetryViolation { asymmetry: f64, tolerance: f64 },

    #[error("Jacobi eigensolver did not converge within {sweeps} sweeps")]
    NonConvergence { sweeps: usize },

    #[error("no positive semi-definite slice combination found after {attempts} attempts")]
    WhiteningFailure { attempts: usize },

    #[error("invalid instance specification: {0}")]
    InvalidSpec(String),

    #[error("relative error undefined for a zero tensor")]
    ZeroTensor,

    #[error("factor column {index} has zero norm")]
    ZeroColumn { index: usize },

    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
