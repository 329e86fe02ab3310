use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] cogcoop::Error),

    /// Bad or contradictory flags and config entries.
    #[error("{0}")]
    Usage(String),

    #[error("cannot read {path}: {source}")]
    Read {
        path: String,
        source: std::io::Error,
    },

    #[error("cannot write {path}: {source}")]
    Write {
        path: String,
        source: std::io::Error,
    },

    #[error("replayed output differs from {0}")]
    Mismatch(String),
}

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Serialize)]
struct ErrorReport<'a> {
    error: &'a str,
    exit_code: i32,
    message: String,
}

impl CliError {
    pub fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }

    pub fn exit_code(&self) -> i32 {
        use cogcoop::Error as E;
        match self {
            CliError::Core(E::Config(_)) | CliError::Usage(_) | CliError::Read { .. } => 2,
            CliError::Core(E::Precondition(_) | E::Domain(_)) => 3,
            CliError::Core(E::Decode { .. } | E::Internal(_))
            | CliError::Write { .. }
            | CliError::Mismatch(_) => 4,
        }
    }

    fn kind(&self) -> &'static str {
        use cogcoop::Error as E;
        match self {
            CliError::Core(E::Config(_)) => "config",
            CliError::Core(E::Precondition(_)) => "precondition",
            CliError::Core(E::Domain(_)) => "domain",
            CliError::Core(E::Decode { .. }) => "decode",
            CliError::Core(E::Internal(_)) => "internal",
            CliError::Usage(_) => "usage",
            CliError::Read { .. } => "read",
            CliError::Write { .. } => "write",
            CliError::Mismatch(_) => "mismatch",
        }
    }

    /// One-line JSON for stderr.
    pub fn to_json(&self) -> String {
        let report = ErrorReport {
            error: self.kind(),
            exit_code: self.exit_code(),
            message: self.to_string(),
        };
        serde_json::to_string(&report).expect("error report serializes")
    }
}
