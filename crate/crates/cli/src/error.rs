use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error("config key `{key}`: {reason}")]
    InvalidValue { key: String, reason: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("archive {path}: {reason}")]
    Archive { path: PathBuf, reason: String },
    #[error(transparent)]
    Core(#[from] bathy::Error),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }

    pub fn archive(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        CliError::Archive { path: path.into(), reason: reason.into() }
    }

    pub fn invalid(key: &str, reason: impl Into<String>) -> Self {
        CliError::InvalidValue { key: key.to_string(), reason: reason.into() }
    }

    /// Process exit status. 2 is left to argument parsing.
    pub fn exit_code(&self) -> i32 {
        use bathy::Error as E;
        match self {
            CliError::Config(_) | CliError::InvalidValue { .. } => exit::CONFIG,
            CliError::Io { .. } => exit::IO,
            CliError::Archive { .. } => exit::ARCHIVE,
            CliError::Core(e) => match e {
                E::InvalidGrid { .. }
                | E::InvalidParameter { .. }
                | E::GridMismatch { .. }
                | E::NonFiniteInput { .. }
                | E::InvalidSymbol { .. }
                | E::NoIsland { .. }
                | E::OffLattice { .. } => exit::CONFIG,
                E::BlowUp { .. } => exit::BLOW_UP,
                E::Infeasible(_) | E::RecordTooShort { .. } | E::StreamExhausted { .. } | E::InsufficientSamples { .. } => {
                    exit::INFEASIBLE
                }
                E::Singular { .. } | E::DegenerateData => exit::SINGULAR,
                E::InvalidSeries(_) => exit::DIAGNOSTICS,
            },
        }
    }
}

pub mod exit {
    pub const OK: i32 = 0;
    pub const USAGE: i32 = 2;
    pub const CONFIG: i32 = 3;
    pub const IO: i32 = 4;
    pub const ARCHIVE: i32 = 5;
    pub const BLOW_UP: i32 = 6;
    pub const INFEASIBLE: i32 = 7;
    pub const SINGULAR: i32 = 8;
    pub const DIAGNOSTICS: i32 = 9;
}

pub type Result<T> = std::result::Result<T, CliError>;
