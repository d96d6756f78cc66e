use std::path::{Path, PathBuf};

use thiserror::Error;

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const UNRESOLVED: i32 = 1;
    pub const USAGE: i32 = 2;
    pub const GENERATION: i32 = 3;
    pub const SCENARIO: i32 = 4;
    pub const IO: i32 = 5;
}

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad arguments, unreadable or invalid config and trace files.
    #[error("{0}")]
    Usage(String),
    #[error("scene generation failed: {0}")]
    Generation(String),
    #[error("scenario error: {0}")]
    Scenario(String),
    #[error("I/O error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => exit::USAGE,
            CliError::Generation(_) => exit::GENERATION,
            CliError::Scenario(_) => exit::SCENARIO,
            CliError::Io { .. } => exit::IO,
        }
    }

    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

/// Reads an input file; a missing or unreadable input is a usage error.
pub fn read_input(path: &Path) -> Result<Vec<u8>, CliError> {
    std::fs::read(path).map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))
}
