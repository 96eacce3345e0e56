//! The `eegemd` command line: file formats, run manifests, SVG plots and the
//! subcommands that chain them.

pub mod cli;
pub mod commands;
pub mod io;
pub mod manifest;
pub mod plot;

use std::fmt;

pub use cli::Cli;
pub use commands::run;

/// Process exit codes.
pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;

#[derive(Debug)]
pub enum CliError {
    /// Flags that make no sense together or fail validation.
    Usage(String),
    Core(eegemd::Error),
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        Self::Usage(message.into())
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Usage(_) => EXIT_USAGE,
            Self::Core(e) if e.is_numeric() => EXIT_NUMERIC,
            Self::Core(_) => EXIT_DATA,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Usage(m) => write!(f, "usage error: {m}"),
            Self::Core(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<eegemd::Error> for CliError {
    fn from(e: eegemd::Error) -> Self {
        Self::Core(e)
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
