//! Batch front end: run configurations in, summaries and orbit CSVs out.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod io;
pub mod run;

use std::path::Path;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// The configuration or the command line is malformed.
    #[error("configuration error: {0}")]
    Config(String),
    /// An input data file is malformed.
    #[error("input error: {0}")]
    Input(String),
    #[error("stage `{stage}` failed: {source}")]
    Pipeline { stage: &'static str, source: orbitforge::Error },
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    pub(crate) fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Io(format!("{}: {e}", path.display()))
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            _ => 1,
        }
    }
}
