//! File formats, configuration loading and the subcommands behind the
//! `cleansel` binary.

pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod dataset;
pub mod dump;
pub mod error;
pub mod report;

pub use error::{CliError, Result};
