use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Everything that can go wrong while loading, aligning or evaluating.
#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("line {line}: malformed line: {reason}")]
    MalformedLine { line: usize, reason: String },

    #[error("line {line}, column {column}: cannot parse {text:?} as a float")]
    MalformedFloat {
        line: usize,
        column: usize,
        text: String,
    },

    #[error("line {line}, column {column}: non-finite value")]
    NonFinite { line: usize, column: usize },

    #[error("line {line}: expected {expected} components, found {found}")]
    InconsistentDim {
        line: usize,
        expected: usize,
        found: usize,
    },

    #[error("duplicate token {token:?} (line {line})")]
    DuplicateToken { token: String, line: usize },

    #[error("invalid token {0:?}: tokens must be non-empty and contain no whitespace")]
    InvalidToken(String),

    #[error("header declares {declared} but file contains {found}")]
    HeaderMismatch { declared: String, found: String },

    #[error("dimension mismatch: {left} vs {right}")]
    DimMismatch { left: usize, right: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("vocabularies have no token in common")]
    EmptyIntersection,

    #[error("{what} = {value} is out of range ({allowed})")]
    OutOfRange {
        what: &'static str,
        value: String,
        allowed: String,
    },

    #[error("weights sum to zero")]
    ZeroWeights,

    #[error("zero-norm row for token {0:?}")]
    ZeroNormRow(String),

    #[error("zero-norm vector: {0}")]
    ZeroNorm(&'static str),

    #[error("need at least {needed} rows, have {found}")]
    TooFewRows { needed: usize, found: usize },

    #[error("nothing to evaluate: {0}")]
    EmptyEvaluation(String),

    #[error("rank correlation undefined: {0}")]
    DegenerateRanks(&'static str),

    #[error("invalid value: {0}")]
    Invalid(String),

    #[error("SVD did not converge within {sweeps} sweeps (off-diagonal residual {residual:e})")]
    IllConditioned { sweeps: usize, residual: f64 },

    #[error("matrix is singular: {0}")]
    Singular(&'static str),
}

impl Error {
    /// True for failures of the numerical routines themselves, as opposed
    /// to bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::IllConditioned { .. } | Error::Singular(_))
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
