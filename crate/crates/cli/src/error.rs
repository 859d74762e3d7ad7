use std::io;
use std::path::PathBuf;

use jex_core::CoreError;
use jex_owsplit::OwsplitError;
use jex_toycorpus::ToyError;
use thiserror::Error;

pub type Result<T, E = CliError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{}: no such file or directory", .0.display())]
    MissingPath(PathBuf),
    #[error("{0}")]
    Data(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
}

impl CliError {
    /// Process exit status: 1 usage, 2 data, 3 numeric.
    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Usage(_) | Self::MissingPath(_) => 1,
            Self::Data(_) => 2,
            Self::Numeric(_) => 3,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, e: io::Error) -> Self {
        let path = path.into();
        if e.kind() == io::ErrorKind::NotFound {
            Self::MissingPath(path)
        } else {
            Self::Data(format!("{}: {e}", path.display()))
        }
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::NumericFailure(m) => Self::Numeric(m),
            CoreError::Io { path, source } => Self::io(path, source),
            CoreError::MissingStore => Self::Usage(e.to_string()),
            CoreError::Data(inner) => inner.into(),
            other => Self::Data(other.to_string()),
        }
    }
}

impl From<OwsplitError> for CliError {
    fn from(e: OwsplitError) -> Self {
        match e {
            OwsplitError::Io { path, source } => Self::io(path, source),
            other => Self::Data(other.to_string()),
        }
    }
}

impl From<ToyError> for CliError {
    fn from(e: ToyError) -> Self {
        match e {
            ToyError::Core(c) => c.into(),
            ToyError::Data(d) => d.into(),
            ToyError::Io { path, source } => Self::io(path, source),
            ToyError::InvalidSpec(m) => Self::Usage(format!("invalid toy spec: {m}")),
        }
    }
}
