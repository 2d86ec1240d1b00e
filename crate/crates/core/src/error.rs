use std::path::PathBuf;

/// Errors raised by the estimation, simulation and I/O layers.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("invalid configuration `{field}`: {message}")]
    InvalidConfig { field: String, message: String },

    #[error("series `{series}` has non-positive value {value} at {period} under log transform code {code}")]
    NonPositiveLog {
        series: String,
        period: String,
        value: f64,
        code: u8,
    },

    #[error("series have no common sample; spans: {spans}")]
    EmptySample { spans: String },

    #[error("missing value in series `{series}` at {period} inside the common sample")]
    MissingValue { series: String, period: String },

    #[error("numerically degenerate draw: {0}")]
    Degenerate(String),

    #[error("explosive simulated path after {attempts} parameter draws (max |y| = {max_abs:e})")]
    Explosive { attempts: usize, max_abs: f64 },

    #[error("parse error in {context}: {message}")]
    Parse { context: String, message: String },

    #[error("{path}: {cause}")]
    Io { path: PathBuf, cause: std::io::Error },

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::InvalidConfig {
            field: field.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            cause: source,
        }
    }
}

pub(crate) fn check_dim(context: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            context,
            expected,
            actual,
        })
    }
}
