use thiserror::Error;

/// Errors produced anywhere in the localization pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("refinement target infeasible (slack {slack:.3e})")]
    Infeasible { slack: f64 },

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("schema version mismatch in {path}: expected {expected}, found {found}")]
    SchemaVersion {
        path: String,
        expected: String,
        found: String,
    },

    #[error("input error: {0}")]
    Input(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Short machine-readable code used by the CLI error line.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Precondition(_) => "E_PRECONDITION",
            Error::Config(_) => "E_CONFIG",
            Error::Infeasible { .. } => "E_INFEASIBLE",
            Error::Numeric(_) => "E_NUMERIC",
            Error::Parse { .. } => "E_PARSE",
            Error::SchemaVersion { .. } => "E_SCHEMA",
            Error::Input(_) => "E_INPUT",
            Error::Io { .. } => "E_IO",
        }
    }

    pub(crate) fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

macro_rules! ensure {
    ($cond:expr, $($arg:tt)+) => {
        if !$cond {
            return Err($crate::error::Error::Precondition(format!($($arg)+)));
        }
    };
}
pub(crate) use ensure;
