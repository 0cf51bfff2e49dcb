use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),

    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("singularity: {0}")]
    Singularity(String),

    #[error("state outside the domain: {0}")]
    Domain(String),

    #[error("unsupported integration scheme: {0}")]
    UnsupportedScheme(String),

    #[error("integration diverged at step {step}: |state| exceeded {limit:e}")]
    Divergence { step: usize, limit: f64 },

    #[error("{path}: format error at byte offset {offset}: {message}")]
    Format {
        path: PathBuf,
        offset: u64,
        message: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("degenerate latent space: {0}")]
    DegenerateLatent(String),

    #[error("total variance of the ground truth is zero; R² is undefined")]
    UndefinedVariance,

    #[error("ground truth has zero norm; normalized MSE is undefined")]
    UndefinedNormalization,

    #[error("polynomial expansion too large: {features} features (limit {limit})")]
    ExpansionTooLarge { features: u128, limit: u128 },

    #[error(
        "insufficient data for MLP fit: {available} datapoints available, \
         {required} required ({ratio}x the {parameters} parameters)"
    )]
    InsufficientData {
        available: usize,
        required: usize,
        parameters: usize,
        ratio: usize,
    },

    #[error("invalid configuration: {0}")]
    Config(String),
}

impl Error {
    /// True for failures of the numerics (divergence, singular input,
    /// undefined statistics) as opposed to bad input or configuration.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::NonFinite(_)
                | Error::Singularity(_)
                | Error::Divergence { .. }
                | Error::DegenerateLatent(_)
                | Error::UndefinedVariance
                | Error::UndefinedNormalization
        )
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, offset: u64, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            offset,
            message: message.into(),
        }
    }
}
