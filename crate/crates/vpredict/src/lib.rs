//! Filesystem and command-line companion to `vpredict-core`: on-disk
//! formats for datasets, oracle grids, fits, and evaluation reports, plus
//! the verification suites and figure-data exports the `vpredict` binary
//! drives.
//!
//! The core crate owns all mathematics; this crate owns IO, strict JSON
//! schemas, CSV layouts, digests, and thread-capped parallel dispatch.

pub mod digest;
pub mod dto;
pub mod export;
pub mod gridio;
pub mod jsonfmt;
pub mod runtime;
pub mod suites;

use std::fmt;
use std::path::Path;

/// Failure modes of the command-line pipeline, carrying the process exit
/// code contract: usage errors exit 2, data/schema errors exit 3.
/// (Verification failures are not errors; `verify` reports them through
/// its exit status 1.)
#[derive(Debug)]
pub enum CliError {
    /// Wrong invocation: bad flag values, missing inputs for the chosen
    /// mode, unknown method names.
    Usage(String),
    /// Bad file content: unreadable/unwritable paths, malformed JSON or
    /// CSV, schema-version mismatches, inconsistent field values.
    Data(String),
}

impl CliError {
    /// Process exit code for this error class.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Data(_) => 3,
        }
    }

    /// Usage error with a formatted message.
    pub fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }

    /// Data/schema error with a formatted message.
    pub fn data(msg: impl Into<String>) -> Self {
        CliError::Data(msg.into())
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Data(m) => f.write_str(m),
        }
    }
}

impl std::error::Error for CliError {}

/// Reads a whole file, mapping IO failures to data errors that name the
/// path.
pub fn read_file(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path)
        .map_err(|e| CliError::data(format!("cannot read {}: {e}", path.display())))
}

/// Writes a whole file, mapping IO failures to data errors that name the
/// path, and returns the content digest.
pub fn write_file(path: &Path, content: &str) -> Result<String, CliError> {
    std::fs::write(path, content)
        .map_err(|e| CliError::data(format!("cannot write {}: {e}", path.display())))?;
    Ok(digest::sha256_hex(content.as_bytes()))
}
