use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] attrep_core::Error),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed PGM: {0}")]
    Pgm(String),

    #[error("config: {0}")]
    Config(String),

    #[error("bad input: {0}")]
    Input(String),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }

    /// 1 for invalid input or configuration, 2 for numerical failure.
    pub fn exit_code(&self) -> i32 {
        use attrep_core::Error as E;
        match self {
            Self::Core(E::MonotonicityLost { .. } | E::Blowup { .. } | E::NonFiniteEnergy(_) | E::NoSteadyState(_)) => 2,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
