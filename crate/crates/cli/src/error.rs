use std::fmt;

use argo_gp::error::{Error, ErrorClass};

/// A failure reported as one `error[class]: detail` line.
#[derive(Debug)]
pub struct CliError {
    pub class: ErrorClass,
    pub detail: String,
}

impl CliError {
    pub fn new(class: ErrorClass, detail: impl Into<String>) -> Self {
        CliError {
            class,
            detail: detail.into(),
        }
    }

    pub fn config(detail: impl Into<String>) -> Self {
        Self::new(ErrorClass::Config, detail)
    }

    pub fn data(detail: impl Into<String>) -> Self {
        Self::new(ErrorClass::Data, detail)
    }

    pub fn numerical(detail: impl Into<String>) -> Self {
        Self::new(ErrorClass::Numerical, detail)
    }

    pub fn exit_code(&self) -> i32 {
        match self.class {
            ErrorClass::Config => 2,
            ErrorClass::Data | ErrorClass::Io => 3,
            ErrorClass::Numerical => 4,
        }
    }

    /// Prefixes the detail with where the failure happened.
    pub fn context(self, what: impl fmt::Display) -> Self {
        CliError {
            detail: format!("{what}: {}", self.detail),
            ..self
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let detail = self.detail.split_whitespace().collect::<Vec<_>>().join(" ");
        write!(f, "error[{}]: {detail}", self.class)
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::new(e.class(), e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::new(ErrorClass::Io, e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::data(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
