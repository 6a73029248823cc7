//! Failure classes and their process exit codes.

use std::path::Path;
use std::process::ExitCode;

/// Exit code for a missing input file (`EX_NOINPUT`).
pub const MISSING_FILE: u8 = 66;
pub const CONFIG: u8 = 2;
pub const RUNTIME: u8 = 1;

#[derive(Debug)]
pub enum CliError {
    /// Invalid configuration; the message names the key.
    Config(String),
    MissingFile(String),
    Runtime(anyhow::Error),
}

impl CliError {
    pub fn io(path: &Path, e: std::io::Error) -> Self {
        if e.kind() == std::io::ErrorKind::NotFound {
            CliError::MissingFile(format!("{}: {e}", path.display()))
        } else {
            CliError::Runtime(anyhow::Error::new(e).context(format!("reading {}", path.display())))
        }
    }

    pub fn code(&self) -> ExitCode {
        ExitCode::from(match self {
            CliError::Config(_) => CONFIG,
            CliError::MissingFile(_) => MISSING_FILE,
            CliError::Runtime(_) => RUNTIME,
        })
    }

    pub fn report(&self) {
        match self {
            CliError::Config(m) => eprintln!("config error: {m}"),
            CliError::MissingFile(m) => eprintln!("missing file: {m}"),
            CliError::Runtime(e) => eprintln!("error: {e:?}"),
        }
    }
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        CliError::Runtime(e)
    }
}

/// Library errors keep their class: config errors exit 2, a missing file 66.
pub fn from_lib(e: matldc::Error, context: impl Into<String>) -> CliError {
    match e {
        matldc::Error::Config { key, msg } => CliError::Config(format!("`{key}`: {msg}")),
        matldc::Error::Io(io) if io.kind() == std::io::ErrorKind::NotFound => {
            CliError::MissingFile(format!("{}: {io}", context.into()))
        }
        other => CliError::Runtime(anyhow::Error::new(other).context(context.into())),
    }
}
