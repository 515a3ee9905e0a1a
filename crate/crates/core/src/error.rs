use std::fmt;

use thiserror::Error;

/// Broad failure category, used by the command-line front end to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Data,
    Numerical,
    Io,
}

impl fmt::Display for ErrorClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ErrorClass::Config => "config",
            ErrorClass::Data => "data",
            ErrorClass::Numerical => "numerical",
            ErrorClass::Io => "io",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("schema error: {0}")]
    Schema(String),

    #[error("{count} row(s) failed to parse; first at row {first_row}, field `{field}`: {detail}")]
    Row {
        count: usize,
        first_row: usize,
        field: String,
        detail: String,
    },

    #[error("{count} row(s) out of range; first at row {first_row}, field `{field}` = {value}")]
    Range {
        count: usize,
        first_row: usize,
        field: String,
        value: f64,
    },

    #[error("profile {profile_id} has inconsistent {field} across its measurements (row {row})")]
    ProfileConsistency {
        profile_id: i64,
        field: &'static str,
        row: usize,
    },

    #[error("empty dataset: {0}")]
    EmptyDataset(String),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("Bessel evaluation failed for order {nu} at {x}")]
    Bessel { nu: f64, x: f64 },

    #[error("covariance block for column {column} is not positive definite")]
    NotPositiveDefinite { column: usize },

    #[error("non-positive conditional variance {value:e} at column {column}")]
    ConditionalVariance { column: usize, value: f64 },

    #[error("dense covariance factorization failed: {0}")]
    Factorization(String),

    #[error("degenerate data: {0}")]
    Degenerate(String),

    #[error("optimizer failed at iteration {iteration}: {detail}")]
    Optimizer {
        iteration: usize,
        detail: String,
        trace: Vec<f64>,
    },

    #[error("non-finite log-likelihood: {0}")]
    NonFinite(String),

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Schema(_) | Error::InvalidParams(_) | Error::DimensionMismatch { .. } => {
                ErrorClass::Config
            }
            Error::Row { .. }
            | Error::Range { .. }
            | Error::ProfileConsistency { .. }
            | Error::EmptyDataset(_)
            | Error::LengthMismatch { .. }
            | Error::Degenerate(_)
            | Error::Format(_)
            | Error::Csv(_) => ErrorClass::Data,
            Error::Bessel { .. }
            | Error::NotPositiveDefinite { .. }
            | Error::ConditionalVariance { .. }
            | Error::Factorization(_)
            | Error::Optimizer { .. }
            | Error::NonFinite(_) => ErrorClass::Numerical,
            Error::Io(_) => ErrorClass::Io,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
