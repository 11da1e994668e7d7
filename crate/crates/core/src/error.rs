use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("internal consistency check failed: {0}")]
    Consistency(String),

    #[error("integration stalled at t = {t}: step size {step:e} underflowed (stiff or blown-up system)")]
    Stiffness { t: f64, step: f64 },

    #[error("accuracy check failed: {0}")]
    Accuracy(String),

    #[error("dimension ladder exceeded the cap D = {cap} (last difference {last_diff:e})")]
    NonConvergence { cap: usize, last_diff: f64 },

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("truncation bias: {0}")]
    TruncationBias(String),

    #[error("truncation instability at t = {t}: moment magnitude {magnitude:e}")]
    TruncationInstability { t: f64, magnitude: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("file format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code: 2 configuration/usage, 3 numerical failure, 4 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidDimension(_)
            | Error::Domain(_)
            | Error::DimensionMismatch(_)
            | Error::Config(_)
            | Error::InvalidState(_)
            | Error::TruncationBias(_) => 2,
            Error::Consistency(_)
            | Error::Stiffness { .. }
            | Error::Accuracy(_)
            | Error::NonConvergence { .. }
            | Error::TruncationInstability { .. }
            | Error::Numerical(_) => 3,
            Error::Format(_) | Error::Io(_) | Error::Json(_) => 4,
        }
    }
}
