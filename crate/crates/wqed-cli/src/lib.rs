//! Presets, configuration files and output writers for the `wqed` binary.

use std::path::Path;

pub mod config;
pub mod output;
pub mod presets;
pub mod run;
pub mod suite;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config: {0}")]
    Schema(String),
    #[error("config field `{field}`: {message}")]
    Field { field: String, message: String },
    #[error("{file}: {inner}")]
    InFile { file: String, inner: Box<CliError> },
    #[error("unknown preset `{0}`")]
    UnknownPreset(String),
    #[error("i/o: {0}")]
    Io(String),
    #[error(transparent)]
    Core(#[from] wqed_core::Error),
}

impl CliError {
    pub fn field(field: &str, message: impl Into<String>) -> Self {
        CliError::Field { field: field.to_string(), message: message.into() }
    }

    fn in_file(self, path: &Path) -> Self {
        CliError::InFile { file: path.display().to_string(), inner: Box::new(self) }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

pub use config::{load_config, parse_config, Config};
pub use output::{Assertion, RunManifest, Table};
pub use presets::{run_preset, PresetOutcome, PRESETS};
