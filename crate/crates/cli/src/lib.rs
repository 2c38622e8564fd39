//! Batch runner behind the `jpo` binary: configuration, the
//! simulate/analyze/fit pipeline, run manifests and figure bundles.

pub mod config;
pub mod pipeline;
pub mod report;
pub mod svg;

use jpo_core::JpoError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{failed} of {total} members failed")]
    Partial { failed: usize, total: usize },
    #[error("I/O error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Partial { .. } => 3,
            CliError::Io(_) => 4,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

/// Reading and format problems are I/O failures; everything else points at
/// the configuration.
impl From<JpoError> for CliError {
    fn from(e: JpoError) -> Self {
        match e {
            JpoError::Io(_) | JpoError::Format { .. } => CliError::Io(e.to_string()),
            other => CliError::Config(other.to_string()),
        }
    }
}
