//! File formats and subcommands of the `iaitrack` tool.
//!
//! Exit codes: 0 success, 1 bad flags or infeasible configuration,
//! 2 unreadable or unwritable path, 3 malformed input or duplicate instance
//! ID, 4 training diverged.

pub mod commands;
pub mod error;
pub mod iaitrack;
pub mod ppm;
pub mod weights;
pub mod world;

pub use error::{CliError, CliResult};
