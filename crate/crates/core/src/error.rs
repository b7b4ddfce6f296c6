use thiserror::Error;

/// Errors produced by the core numerics and the lab harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("step {t} out of range {lo}..={hi}")]
    StepOutOfRange { t: usize, lo: usize, hi: usize },

    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    Dimension {
        context: String,
        expected: usize,
        got: usize,
    },

    #[error("invalid schedule: {0}")]
    Schedule(String),

    #[error("invalid mixture: {0}")]
    Mixture(String),

    #[error("matrix not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("numeric failure in {context}: {detail}")]
    Numeric { context: String, detail: String },

    #[error("invalid config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn numeric(context: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Numeric {
            context: context.into(),
            detail: detail.into(),
        }
    }

    pub fn dimension(context: impl Into<String>, expected: usize, got: usize) -> Self {
        Error::Dimension {
            context: context.into(),
            expected,
            got,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
