//! File formats, campaign orchestration and reporting for the `retopt`
//! command-line tool.

pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod error;
pub mod report;
pub mod svg;
pub mod tables;

pub use error::{CliError, Result};
