use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid architecture config: {0}")]
    InvalidConfig(String),

    #[error("{stack} stack is not defined for a {family} model")]
    StackMismatch {
        stack: &'static str,
        family: &'static str,
    },

    #[error("unknown model '{name}'; available: {}", available.join(", "))]
    UnknownModel {
        name: String,
        available: Vec<String>,
    },

    #[error("unknown strategy '{0}'")]
    UnknownStrategy(String),

    #[error("invalid strategy config: {0}")]
    InvalidStrategy(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid call: {0}")]
    InvalidCall(String),

    #[error("trace is empty")]
    EmptyTrace,

    #[error("ordering has {got} entries but {expected} documents were given")]
    OrderingLength { expected: usize, got: usize },

    #[error("ordering is not a permutation of 0..{0}")]
    NotAPermutation(usize),

    #[error("oracle limit exceeded: {0}")]
    OracleLimit(String),

    #[error("cost must be positive")]
    ZeroCost,

    #[error("no queries to report")]
    EmptyReport,

    #[error("{}:{line}: {msg}", source_name(path))]
    Parse {
        path: Option<PathBuf>,
        line: usize,
        msg: String,
    },

    #[error("{}: {msg}", source_name(path))]
    Format { path: Option<PathBuf>, msg: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("internal invariant violated: {0}")]
    Invariant(String),
}

fn source_name(path: &Option<PathBuf>) -> String {
    path.as_ref()
        .map(|p| p.display().to_string())
        .unwrap_or_else(|| "<input>".to_string())
}

impl Error {
    /// True for errors that indicate a bug rather than bad input.
    pub fn is_internal(&self) -> bool {
        matches!(self, Error::Invariant(_))
    }

    pub(crate) fn parse(line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            path: None,
            line,
            msg: msg.into(),
        }
    }

    pub(crate) fn with_path(self, p: &std::path::Path) -> Self {
        match self {
            Error::Parse { line, msg, .. } => Error::Parse {
                path: Some(p.to_path_buf()),
                line,
                msg,
            },
            Error::Format { msg, .. } => Error::Format {
                path: Some(p.to_path_buf()),
                msg,
            },
            other => other,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
