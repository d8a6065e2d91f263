use std::io;

use thiserror::Error;

use crate::stem::StemKind;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// A `(segment_id, stem)` pair that could not be found in a store or bundle.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct MissingKey {
    pub segment_id: String,
    pub stem: StemKind,
}

impl std::fmt::Display for MissingKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}/{}", self.segment_id, self.stem)
    }
}

fn join_missing(missing: &[MissingKey]) -> String {
    missing
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join(", ")
}

fn triplet_prefix(triplet_id: &Option<String>) -> String {
    match triplet_id {
        Some(id) => format!("triplet {id}: "),
        None => String::new(),
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("unsupported pack format: {0}")]
    UnsupportedFormat(String),
    #[error("corrupt pack: {0}")]
    CorruptPack(String),
    #[error("duplicate record key {0}")]
    DuplicateRecord(String),
    #[error("dimension mismatch: expected {expected}, found {found} ({context})")]
    DimensionMismatch {
        expected: usize,
        found: usize,
        context: String,
    },
    #[error("invalid vector: {0}")]
    InvalidVector(String),
    #[error("invalid record: {0}")]
    InvalidRecord(String),
    #[error("line {line}: {message}")]
    ParseError { line: usize, message: String },
    #[error("invalid triplet at line {line}: {message}")]
    InvalidTriplet { line: usize, message: String },
    #[error("invalid stem label {0:?}")]
    InvalidStem(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("{}missing stems: {}", triplet_prefix(.triplet_id), join_missing(.missing))]
    MissingStem {
        triplet_id: Option<String>,
        missing: Vec<MissingKey>,
    },
    #[error("degenerate vector: {0}")]
    DegenerateVector(String),
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("stem config mismatch: expected {expected}, found {found}")]
    ConfigMismatch { expected: String, found: String },
    #[error("empty dataset")]
    EmptyDataset,
    #[error("singular system: condition estimate {condition:e} exceeds limit")]
    SingularSystem { condition: f64 },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("cannot stratify: {0}")]
    StratificationError(String),
    #[error("invalid perturbation: {0}")]
    InvalidPerturbation(String),
    #[error("invalid library entry {segment_id}: {message}")]
    InvalidEntry { segment_id: String, message: String },
    #[error("invalid query: {0}")]
    InvalidQuery(String),
    #[error("every active channel has zero weight")]
    DegenerateQuery,
    #[error("unknown segment {0:?}")]
    UnknownSegment(String),
    #[error("unknown preset {0:?}")]
    UnknownPreset(String),
    #[error("preset parse error at line {line}: {message}")]
    PresetParseError { line: usize, message: String },
    #[error("serialization failed: {0}")]
    Serialization(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    /// Stable machine-readable name of the error kind.
    pub fn code(&self) -> &'static str {
        match self {
            Error::UnsupportedFormat(_) => "UnsupportedFormat",
            Error::CorruptPack(_) => "CorruptPack",
            Error::DuplicateRecord(_) => "DuplicateRecord",
            Error::DimensionMismatch { .. } => "DimensionMismatch",
            Error::InvalidVector(_) => "InvalidVector",
            Error::InvalidRecord(_) => "InvalidRecord",
            Error::ParseError { .. } => "ParseError",
            Error::InvalidTriplet { .. } => "InvalidTriplet",
            Error::InvalidStem(_) => "InvalidStem",
            Error::InvalidConfig(_) => "InvalidConfig",
            Error::MissingStem { .. } => "MissingStem",
            Error::DegenerateVector(_) => "DegenerateVector",
            Error::LengthMismatch { .. } => "LengthMismatch",
            Error::ConfigMismatch { .. } => "ConfigMismatch",
            Error::EmptyDataset => "EmptyDataset",
            Error::SingularSystem { .. } => "SingularSystem",
            Error::InvalidInput(_) => "InvalidInput",
            Error::StratificationError(_) => "StratificationError",
            Error::InvalidPerturbation(_) => "InvalidPerturbation",
            Error::InvalidEntry { .. } => "InvalidEntry",
            Error::InvalidQuery(_) => "InvalidQuery",
            Error::DegenerateQuery => "DegenerateQuery",
            Error::UnknownSegment(_) => "UnknownSegment",
            Error::UnknownPreset(_) => "UnknownPreset",
            Error::PresetParseError { .. } => "PresetParseError",
            Error::Serialization(_) => "Serialization",
            Error::Io(_) => "IoError",
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(err: serde_json::Error) -> Self {
        Error::Serialization(err.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(err: csv::Error) -> Self {
        Error::Serialization(err.to_string())
    }
}
