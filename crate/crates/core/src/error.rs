use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid header: {0}")]
    Header(String),

    #[error("line {line}: duplicate id '{id}'")]
    DuplicateId { line: usize, id: String },

    #[error("record '{id}': {field} = {value} is outside (0, 1]")]
    Probability {
        id: String,
        field: String,
        value: f64,
    },

    #[error("record '{id}': {field} has length {found}, expected {expected}")]
    LengthMismatch {
        id: String,
        field: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("record '{id}': {message}")]
    InvalidRecord { id: String, message: String },

    #[error("record '{id}' position {position}: stored {field} deviates from recomputation by {deviation:e}")]
    TokenInconsistency {
        id: String,
        position: usize,
        field: &'static str,
        deviation: f64,
    },

    #[error("record '{0}' has no token block")]
    MissingTokens(String),

    #[error("record '{id}' position {position}: missing {field}")]
    MissingTokenField {
        id: String,
        position: usize,
        field: &'static str,
    },

    #[error("record '{id}' position {position}: {source}")]
    AtPosition {
        id: String,
        position: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("weights are degenerate (no strictly positive mass)")]
    DegenerateWeights,

    #[error("weights must be non-negative and finite")]
    NegativeWeight,

    #[error("distribution is not normalized (sum = {0})")]
    Unnormalized(f64),

    #[error("length mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("population is empty")]
    EmptyPopulation,

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("record '{id}': reference index {index} out of bounds ({available} references)")]
    RefIndexOutOfBounds {
        id: String,
        index: usize,
        available: usize,
    },

    #[error("evaluation needs at least one member and one nonmember (members: {members}, nonmembers: {nonmembers})")]
    OneClass { members: usize, nonmembers: usize },

    #[error("{}", describe_gaps(.0))]
    Coverage(Vec<CoverageGap>),

    #[error("non-finite score for '{id}'")]
    NonFinite { id: String },

    #[error("degenerate variance: correlation undefined")]
    DegenerateVariance,

    #[error("no record carries a privacy mask")]
    NoMaskedRecords,

    #[error("record '{0}' has no privacy mask")]
    MissingPrivMask(String),
}

/// Labeled ids that an attack left unscored.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoverageGap {
    pub attack: String,
    pub missing: Vec<String>,
}

fn describe_gaps(gaps: &[CoverageGap]) -> String {
    gaps.iter()
        .map(|g| {
            format!(
                "attack '{}' has no score for {} labeled id(s): {}",
                g.attack,
                g.missing.len(),
                g.missing.join(", ")
            )
        })
        .collect::<Vec<_>>()
        .join("; ")
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn at_position(id: &str, position: usize, source: Error) -> Self {
        Error::AtPosition {
            id: id.to_owned(),
            position,
            source: Box::new(source),
        }
    }
}
