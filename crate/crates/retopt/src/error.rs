use std::path::{Path, PathBuf};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("cannot access {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed {what} {}: {msg}", path.display())]
    Format {
        what: &'static str,
        path: PathBuf,
        msg: String,
    },
    #[error("divergence: {0}")]
    Divergence(String),
}

pub type Result<T> = std::result::Result<T, CliError>;

pub mod exit_code {
    pub const SUCCESS: i32 = 0;
    pub const CONFIG: i32 = 2;
    pub const IO: i32 = 3;
    pub const DIVERGENCE: i32 = 4;
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => exit_code::CONFIG,
            CliError::Io { .. } | CliError::Format { .. } => exit_code::IO,
            CliError::Divergence(_) => exit_code::DIVERGENCE,
        }
    }

    pub(crate) fn io(path: impl AsRef<Path>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.as_ref().to_path_buf(),
            source,
        }
    }

    pub(crate) fn format(what: &'static str, path: impl AsRef<Path>, msg: impl ToString) -> Self {
        CliError::Format {
            what,
            path: path.as_ref().to_path_buf(),
            msg: msg.to_string(),
        }
    }
}

impl From<retopt_core::Error> for CliError {
    fn from(e: retopt_core::Error) -> Self {
        match e {
            retopt_core::Error::Divergence(m) => CliError::Divergence(m),
            other => CliError::Config(other.to_string()),
        }
    }
}
