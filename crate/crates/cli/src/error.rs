use thiserror::Error;

/// Failure classes with their process exit status.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Io(_) => 3,
        }
    }

    /// Prefixes the message with the file it concerns.
    pub fn in_file(self, path: &std::path::Path) -> Self {
        let p = path.display();
        match self {
            CliError::Usage(m) => CliError::Usage(format!("{p}: {m}")),
            CliError::Data(m) => CliError::Data(format!("{p}: {m}")),
            CliError::Io(m) => CliError::Io(m),
        }
    }
}

impl From<laconic::Error> for CliError {
    fn from(e: laconic::Error) -> Self {
        let msg = e.to_string().replace('\n', " ");
        match e {
            laconic::Error::Config { .. } => CliError::Usage(msg),
            laconic::Error::Io { .. } => CliError::Io(msg),
            laconic::Error::Contract(_) | laconic::Error::Parse { .. } | laconic::Error::Format(_) => {
                CliError::Data(msg)
            }
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

pub fn io_err(path: &std::path::Path, e: std::io::Error) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}
