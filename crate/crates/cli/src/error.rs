use std::fmt;

use serde::Serialize;
use stemsim_core::Error;

/// Failure of a CLI command or HTTP request.
#[derive(Debug)]
pub enum AppError {
    Core(Error),
    /// A request body or flag value that could not be parsed.
    Malformed(String),
    UnknownDataset(String),
    Settings(String),
}

/// The machine-readable error document printed to stderr and sent over HTTP.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, serde::Deserialize)]
pub struct ErrorBody {
    pub error_code: String,
    pub message: String,
}

impl AppError {
    pub fn code(&self) -> &'static str {
        match self {
            AppError::Core(e) => e.code(),
            AppError::Malformed(_) => "MalformedRequest",
            AppError::UnknownDataset(_) => "UnknownDataset",
            AppError::Settings(_) => "InvalidSettings",
        }
    }

    /// HTTP status: 400 malformed, 404 unknown, 422 invariant, 500 internal.
    pub fn status(&self) -> u16 {
        match self {
            AppError::Malformed(_) | AppError::Settings(_) => 400,
            AppError::UnknownDataset(_) => 404,
            AppError::Core(e) => match e {
                Error::UnknownSegment(_) | Error::UnknownPreset(_) => 404,
                Error::ParseError { .. }
                | Error::InvalidStem(_)
                | Error::InvalidConfig(_)
                | Error::InvalidInput(_)
                | Error::InvalidQuery(_)
                | Error::InvalidRecord(_)
                | Error::Serialization(_) => 400,
                Error::DegenerateQuery
                | Error::DegenerateVector(_)
                | Error::DimensionMismatch { .. }
                | Error::LengthMismatch { .. }
                | Error::InvalidVector(_)
                | Error::ConfigMismatch { .. }
                | Error::MissingStem { .. }
                | Error::EmptyDataset
                | Error::SingularSystem { .. }
                | Error::StratificationError(_)
                | Error::InvalidTriplet { .. }
                | Error::InvalidEntry { .. }
                | Error::InvalidPerturbation(_) => 422,
                _ => 500,
            },
        }
    }

    pub fn body(&self) -> ErrorBody {
        ErrorBody {
            error_code: self.code().to_string(),
            message: self.to_string(),
        }
    }
}

impl fmt::Display for AppError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AppError::Core(e) => e.fmt(f),
            AppError::Malformed(m) => write!(f, "malformed request: {m}"),
            AppError::UnknownDataset(name) => write!(f, "unknown dataset {name:?}"),
            AppError::Settings(m) => write!(f, "invalid settings: {m}"),
        }
    }
}

impl std::error::Error for AppError {}

impl From<Error> for AppError {
    fn from(e: Error) -> Self {
        AppError::Core(e)
    }
}

impl From<std::io::Error> for AppError {
    fn from(e: std::io::Error) -> Self {
        AppError::Core(Error::Io(e))
    }
}

pub type AppResult<T> = Result<T, AppError>;
