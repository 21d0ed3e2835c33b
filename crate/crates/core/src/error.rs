use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("lookup failed: {0}")]
    Lookup(String),

    #[error("non-finite value: {0}")]
    Numeric(String),

    #[error("cannot split relation {relation}: {reason}")]
    Split { relation: String, reason: String },

    #[error("metric undefined: {0}")]
    UndefinedMetric(String),

    #[error("generation failed: {0}")]
    Generation(String),

    #[error("{file}: {message}")]
    Format { file: String, message: String },

    #[error("no checkpoint at {0}")]
    NoCheckpoint(PathBuf),

    #[error("malformed checkpoint: {0}")]
    Checkpoint(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Stable machine-readable code printed by the command-line front end.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Argument(_) => "E_ARGUMENT",
            Error::Contract(_) => "E_CONTRACT",
            Error::Lookup(_) => "E_LOOKUP",
            Error::Numeric(_) => "E_NUMERIC",
            Error::Split { .. } => "E_SPLIT",
            Error::UndefinedMetric(_) => "E_METRIC",
            Error::Generation(_) => "E_GENERATION",
            Error::Format { .. } => "E_FORMAT",
            Error::NoCheckpoint(_) => "E_NO_CHECKPOINT",
            Error::Checkpoint(_) => "E_CHECKPOINT",
            Error::Io { .. } => "E_IO",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
