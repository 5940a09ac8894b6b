//! Configuration-driven runner: `solve` precomputes, `simulate` evaluates
//! policies against the stored bundle, `verify` runs the oracle checks.

pub mod bundle;
pub mod commands;
pub mod config;
pub mod error;
pub mod verify;

pub use error::{CliError, CliResult};
