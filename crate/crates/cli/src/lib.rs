//! Command-line front end for the CCM toolkit.

pub mod args;
pub mod commands;
pub mod error;

pub use args::Cli;
pub use commands::{run, RunConfig, FORMAT_VERSION};
pub use error::{CliError, ExitStatus};
