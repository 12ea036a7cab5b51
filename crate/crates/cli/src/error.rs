use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Core(#[from] inversion_ad::Error),
}

pub type CliResult<T> = Result<T, CliError>;

pub const EXIT_OTHER: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_FORMAT: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;

impl CliError {
    pub fn exit_code(&self) -> i32 {
        use inversion_ad::Error as E;
        match self {
            CliError::Config(_) | CliError::Core(E::InvalidArgument(_)) => EXIT_CONFIG,
            CliError::Core(E::Format { .. }) => EXIT_FORMAT,
            CliError::Core(E::NumericFailure(_)) => EXIT_NUMERIC,
            CliError::File { .. } | CliError::Core(_) => EXIT_OTHER,
        }
    }
}

pub(crate) fn config_err<T>(msg: impl Into<String>) -> CliResult<T> {
    Err(CliError::Config(msg.into()))
}

pub(crate) fn file_err(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> CliError {
    let path = path.into();
    move |source| CliError::File { path, source }
}
