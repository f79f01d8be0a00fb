use std::path::PathBuf;

/// Errors produced by every fallible operation in this crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid shape: {0}")]
    Shape(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unknown axis: {0}")]
    UnknownAxis(String),

    #[error("bad magic in {path}: expected FLD1")]
    BadMagic { path: PathBuf },

    #[error("length mismatch: header declares {declared} values, payload holds {actual}")]
    LengthMismatch { declared: usize, actual: usize },

    #[error("malformed file {path}: {reason}")]
    Malformed { path: PathBuf, reason: String },

    #[error("numerical blow-up: {0}")]
    BlowUp(String),

    #[error("non-finite value produced by {0}")]
    NonFinite(String),

    #[error("correlation undefined: {0}")]
    UndefinedCorrelation(String),

    #[error("degenerate ensemble: {0}")]
    DegenerateEnsemble(String),

    #[error("zero-norm reference frame at batch {batch}, time {time}")]
    ZeroNormReference { batch: usize, time: usize },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error on {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json {
            path: path.into(),
            source,
        }
    }

    /// True for failures of the numerics (blow-up, NaN) rather than of inputs or I/O.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::BlowUp(_) | Error::NonFinite(_) | Error::DegenerateEnsemble(_)
        )
    }

    pub fn is_io(&self) -> bool {
        matches!(
            self,
            Error::Io { .. }
                | Error::BadMagic { .. }
                | Error::LengthMismatch { .. }
                | Error::Malformed { .. }
                | Error::Json { .. }
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
