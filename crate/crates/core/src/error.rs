use std::path::PathBuf;

/// Errors raised by the toolkit.
///
/// Undefined metrics and "no signal" outcomes are not errors in the usual
/// sense; they are carried through `Undefined` so the harness can record
/// them as first-class rows instead of numeric sentinels.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed header: {0}")]
    MalformedHeader(String),

    #[error("payload length mismatch: header declares {expected} values, payload holds {actual}")]
    PayloadLength { expected: usize, actual: usize },

    #[error("time axis is not strictly increasing at index {0}")]
    NonMonotoneTime(usize),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("grid too small: {0}")]
    GridTooSmall(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("insufficient history: {0}")]
    InsufficientHistory(String),

    #[error("cadence mismatch: {0}")]
    Cadence(String),

    #[error("seed does not qualify: {0}")]
    SeedNotQualifying(String),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("undefined metric: {0}")]
    Undefined(String),

    #[error("invalid sounding profile: {0}")]
    Profile(String),

    #[error("case catalog: {0}")]
    Catalog(String),

    #[error("missing variable: {0}")]
    MissingVariable(String),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for outcomes that should become undefined metric records
    /// rather than diagnostics.
    pub fn is_undefined(&self) -> bool {
        matches!(self, Error::Undefined(_) | Error::Empty(_))
    }
}
