use thiserror::Error;

/// Broad failure category, used by front ends to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Numerical,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("series shorter than window plus label (length {length}, window {window})")]
    SeriesTooShort { length: usize, window: usize },

    #[error("degenerate target range: min == max == {0}")]
    DegenerateTarget(f64),

    #[error("constant series: autocorrelation undefined")]
    ConstantSeries,

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid data: {0}")]
    Data(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("divergent inner loop: non-finite head after step {step}")]
    DivergentInnerLoop { step: usize },

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("too few meta-windows: need at least {required} in one series, largest has {available}")]
    TooFewMetaWindows { required: usize, available: usize },

    #[error("config hash mismatch: expected {expected}, found {found}")]
    HashMismatch { expected: String, found: String },

    #[error("empty {0}")]
    Empty(&'static str),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error in {path}: {source}")]
    Csv {
        path: String,
        #[source]
        source: csv::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Config(_) | Error::HashMismatch { .. } => ErrorKind::Config,
            Error::DivergentInnerLoop { .. } | Error::NonFinite(_) => ErrorKind::Numerical,
            _ => ErrorKind::Data,
        }
    }

    pub(crate) fn csv(path: impl AsRef<std::path::Path>, source: csv::Error) -> Self {
        Error::Csv {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
