//! File formats, reports and the command-line front end for `mflqr-core`.

pub mod cli;
pub mod error;
pub mod format;
pub mod golden;
pub mod manifest;
pub mod parallel;
pub mod problem;
pub mod report;
pub mod svg;

pub use error::{CliError, Result};
pub use mflqr_core as core;
