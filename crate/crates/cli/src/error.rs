use std::path::PathBuf;
use std::process::ExitCode;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Degenerate(String),
    #[error(transparent)]
    Model(ratingsim::Error),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(match self {
            CliError::Config(_) => exit::CONFIG,
            CliError::Io { .. } => exit::IO,
            CliError::Degenerate(_) => exit::DEGENERATE,
            CliError::Model(_) => exit::OTHER,
        })
    }
}

impl From<ratingsim::Error> for CliError {
    fn from(e: ratingsim::Error) -> Self {
        use ratingsim::Error as E;
        match e {
            E::EmptyPosterior | E::DegeneratePosterior => CliError::Degenerate(e.to_string()),
            E::InvalidConfig(_)
            | E::InvalidRange { .. }
            | E::InvalidProbability(_)
            | E::InvalidParams(_)
            | E::OutOfRange { .. }
            | E::ShapeMismatch { .. }
            | E::UnknownUser { .. }
            | E::InvalidArgument(_) => CliError::Config(e.to_string()),
            other => CliError::Model(other),
        }
    }
}

/// Process exit codes. Usage errors exit with 2 (reported by the argument parser).
pub mod exit {
    pub const OTHER: u8 = 1;
    pub const CONFIG: u8 = 3;
    pub const IO: u8 = 4;
    pub const DEGENERATE: u8 = 5;
}

pub type Result<T> = std::result::Result<T, CliError>;
