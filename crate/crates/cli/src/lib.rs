//! Configuration, experiment drivers and file formats behind the `gradflow`
//! command-line tool.

pub mod config;
pub mod error;
pub mod experiments;
pub mod output;

pub use config::RunConfig;
pub use error::{CliError, Result};
