//! Command-line runner and live steering server for the handover controller.
//!
//! Exit codes of every command: 0 success, 2 task failure, 3 system error,
//! 4 invalid input.

pub mod bundle;
pub mod commands;
pub mod server;
pub mod wire;

pub use bundle::{BundleArgs, CliError, ConfigBundle};
