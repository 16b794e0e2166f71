use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Core(#[from] parni_core::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit status: 2 for configuration problems, 3 for bad input data.
    pub fn exit_code(&self) -> i32 {
        use parni_core::Error as E;
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Core(E::InvalidConfig(_) | E::InvalidShape(_) | E::TooManyCovariates { .. }) => 2,
            CliError::Core(E::InvalidData(_) | E::DimensionMismatch { .. }) => 3,
            CliError::Csv(_) => 3,
            _ => 1,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
