use std::fmt;
use std::path::Path;

/// Failure of a command, carrying its process exit code.
#[derive(Debug)]
pub enum CliError {
    /// Bad arguments, schema violations or inconsistent settings (exit 2).
    Usage(String),
    /// The analysis itself failed (exit 3).
    Numerical(String),
    /// Reading or writing a file failed (exit 4).
    Io(String),
}

pub type CliResult<T> = Result<T, CliError>;

impl CliError {
    pub fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Io(_) => 4,
        }
    }

    pub fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }

    pub fn io(path: &Path, err: impl fmt::Display) -> Self {
        CliError::Io(format!("{}: {err}", path.display()))
    }

    /// Prefixes the message with what was being done.
    pub fn context(self, what: &str) -> Self {
        match self {
            CliError::Usage(m) => CliError::Usage(format!("{what}: {m}")),
            CliError::Numerical(m) => CliError::Numerical(format!("{what}: {m}")),
            CliError::Io(m) => CliError::Io(format!("{what}: {m}")),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "error: {m}"),
            CliError::Numerical(m) => write!(f, "numerical failure: {m}"),
            CliError::Io(m) => write!(f, "I/O error: {m}"),
        }
    }
}

impl From<polysens::Error> for CliError {
    fn from(e: polysens::Error) -> Self {
        use polysens::Error as E;
        match e {
            E::InvalidInput(_) | E::DimensionMismatch { .. } | E::CapExceeded { .. } | E::QuadratureTooCoarse { .. } => {
                CliError::Usage(e.to_string())
            }
            E::Io(err) => CliError::Io(err.to_string()),
            _ => CliError::Numerical(e.to_string()),
        }
    }
}
