//! Failure taxonomy of the harness.
//!
//! The message prefix (the `#[error]` text up to the colon) and the exit
//! code are both stable, documented interfaces: scripts may match on
//! either. Everything after the colon is free-form detail.

use std::io;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    /// The config file is syntactically or semantically invalid.
    #[error("config-parse-error: {0}")]
    ConfigParse(String),
    /// A file-backed dataset could not be read or fails its shape rules.
    #[error("dataset-load-error: {0}")]
    DatasetLoad(String),
    /// At least one run failed a privacy audit. Fatal by default.
    #[error("audit-violation: {0}")]
    AuditViolation(String),
    /// A replay was requested for a run without a metadata file.
    #[error("missing-metadata: {0}")]
    MissingMetadata(String),
    /// A run broke an engine invariant (mechanism or metric error).
    #[error("run-error: {0}")]
    Run(String),
    #[error("io-error: {0}")]
    Io(#[from] io::Error),
}

impl HarnessError {
    /// Process exit code for this failure class.
    pub fn exit_code(&self) -> u8 {
        match self {
            HarnessError::ConfigParse(_) => 2,
            HarnessError::DatasetLoad(_) => 3,
            HarnessError::AuditViolation(_) => 4,
            HarnessError::MissingMetadata(_) => 5,
            HarnessError::Run(_) | HarnessError::Io(_) => 1,
        }
    }
}
