use std::io;
use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid config `{field}`: {reason}")]
    Config { field: String, reason: String },
    #[error("{}:{line}: {reason}", path.display())]
    Format { path: PathBuf, line: usize, reason: String },
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("evaluation disagrees with the report: {0}")]
    Mismatch(String),
    #[error(transparent)]
    Core(#[from] cleansel_core::Error),
}

impl CliError {
    pub fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        CliError::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    /// 2 for bad input, 3 for a numerical abort, 1 for anything else.
    pub fn exit_code(&self) -> i32 {
        use cleansel_core::Error as E;
        match self {
            CliError::Config { .. } | CliError::Format { .. } => 2,
            CliError::Core(E::Config { .. } | E::Dimension { .. }) => 2,
            CliError::Core(_) => 3,
            CliError::Io { .. } | CliError::Mismatch(_) => 1,
        }
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;
