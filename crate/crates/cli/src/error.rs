//! Exit-code discipline: configuration mistakes exit 2 (same code clap uses
//! for usage errors), bad input data exits 3, and runtime failures exit 4.

use std::fmt;

#[derive(Debug)]
pub enum CliError {
    /// Bad flags, malformed config files, impossible settings.
    Config(anyhow::Error),
    /// Corpus, request, checkpoint, or feature files that do not parse or
    /// do not satisfy their invariants.
    Data(anyhow::Error),
    /// Failures while doing the work: training diverged, generation hit its
    /// budget, files could not be written.
    Runtime(anyhow::Error),
}

impl CliError {
    pub fn code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Runtime(_) => 4,
        }
    }

    pub fn config(msg: impl fmt::Display) -> CliError {
        CliError::Config(anyhow::anyhow!("{msg}"))
    }

    pub fn data(msg: impl fmt::Display) -> CliError {
        CliError::Data(anyhow::anyhow!("{msg}"))
    }

    pub fn runtime(msg: impl fmt::Display) -> CliError {
        CliError::Runtime(anyhow::anyhow!("{msg}"))
    }

    pub fn inner(&self) -> &anyhow::Error {
        match self {
            CliError::Config(e) | CliError::Data(e) | CliError::Runtime(e) => e,
        }
    }
}

/// Maps a library error into a [`CliError`] category with a short context
/// line saying what the command was doing.
pub trait Classify<T> {
    fn config_err(self, what: &str) -> Result<T, CliError>;
    fn data_err(self, what: &str) -> Result<T, CliError>;
    fn runtime_err(self, what: &str) -> Result<T, CliError>;
}

impl<T, E> Classify<T> for Result<T, E>
where
    E: std::error::Error + Send + Sync + 'static,
{
    fn config_err(self, what: &str) -> Result<T, CliError> {
        self.map_err(|e| CliError::Config(anyhow::Error::new(e).context(what.to_string())))
    }

    fn data_err(self, what: &str) -> Result<T, CliError> {
        self.map_err(|e| CliError::Data(anyhow::Error::new(e).context(what.to_string())))
    }

    fn runtime_err(self, what: &str) -> Result<T, CliError> {
        self.map_err(|e| CliError::Runtime(anyhow::Error::new(e).context(what.to_string())))
    }
}
