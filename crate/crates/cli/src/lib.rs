//! Command-line harness: config loading, flag overrides and one function per
//! subcommand. `main.rs` only parses arguments and maps results to exit codes.
//!
//! Exit codes: 0 on success, 1 on configuration or input errors (and other
//! fatal errors), 2 when a run finished but dropped some of its units.

pub mod commands;
pub mod config;

pub use commands::Status;
pub use config::{ConfigError, HarnessConfig, Overrides, TasksFlag, WmChoice};

