use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] sprintctl_core::Error),

    #[error("config file {path}: {message}")]
    Config { path: PathBuf, message: String },

    /// A command line that parsed but does not make sense as a whole.
    #[error("{0}")]
    Usage(String),

    #[error("project {0:?} not found")]
    ProjectNotFound(String),

    #[error("project {0:?} already exists")]
    ProjectExists(String),

    #[error("invalid project id {0:?}: use letters, digits, '-', '_' and '.'")]
    InvalidProjectId(String),

    #[error("invalid request: {0}")]
    BadRequest(String),

    #[error("cannot bind {addr}: {source}")]
    Bind {
        addr: String,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn code(&self) -> &'static str {
        match self {
            CliError::Core(e) => e.code(),
            CliError::Config { .. } => "CONFIG_ERROR",
            CliError::Usage(_) => "USAGE_ERROR",
            CliError::ProjectNotFound(_) => "PROJECT_NOT_FOUND",
            CliError::ProjectExists(_) => "PROJECT_EXISTS",
            CliError::InvalidProjectId(_) => "INVALID_PROJECT_ID",
            CliError::BadRequest(_) => "BAD_REQUEST",
            CliError::Bind { .. } => "BIND_FAILURE",
        }
    }

    /// Process exit status: 2 for usage problems, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            _ => 1,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
