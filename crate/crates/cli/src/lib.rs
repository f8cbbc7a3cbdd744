//! Command-line front end for qtraj: CSV outputs with JSON manifests, and the
//! acceptance suite.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;
pub mod verify;

pub use error::{CliError, CliResult};
