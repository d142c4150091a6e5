use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("ill-posed problem: {0}")]
    IllPosed(String),

    #[error("degenerate solution: {0}")]
    DegenerateSolution(String),

    #[error("instance is not noiseless/outlier-free: max residual {max_residual:e}")]
    NotNoiseless { max_residual: f64 },

    #[error("invalid certificate: {0}")]
    InvalidCertificate(String),

    #[error("problem too large: {0}")]
    TooLarge(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn ensure_finite(values: &[f64], what: &str) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("{what} contains non-finite values")))
    }
}
