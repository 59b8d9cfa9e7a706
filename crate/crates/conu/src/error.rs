use std::fmt;
use std::io;
use std::path::PathBuf;

/// Errors surfaced by dataset construction, generation, risk evaluation,
/// estimation, and file I/O.
#[derive(Debug)]
pub enum Error {
    /// An argument violated a documented precondition.
    InvalidArgument(String),
    /// Rejection sampling could not satisfy its constraint.
    Unsatisfiable(String),
    /// A text file failed to parse. `line` is 1-based; 0 means the failure
    /// is not tied to a specific line.
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    Io(io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidArgument(msg) => write!(f, "invalid argument: {msg}"),
            Error::Unsatisfiable(msg) => write!(f, "unsatisfiable: {msg}"),
            Error::Parse {
                path,
                line,
                message,
            } => {
                if *line == 0 {
                    write!(f, "{}: {message}", path.display())
                } else {
                    write!(f, "{}:{line}: {message}", path.display())
                }
            }
            Error::Io(err) => write!(f, "io error: {err}"),
        }
    }
}

impl std::error::Error for Error {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Error::Io(err) => Some(err),
            _ => None,
        }
    }
}

impl From<io::Error> for Error {
    fn from(err: io::Error) -> Self {
        Error::Io(err)
    }
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
