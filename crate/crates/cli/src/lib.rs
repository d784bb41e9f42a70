//! Command implementations behind the `specmatch` binary.

pub mod commands;
pub mod config;
pub mod error;

pub use commands::{prediction_path, Common};
pub use error::{CliError, CliResult};
