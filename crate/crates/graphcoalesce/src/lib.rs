//! File formats, the path driver, the benchmark harness and the command line
//! around `graphcoalesce-core`.

pub mod bench;
pub mod cli;
pub mod error;
pub mod io;
pub mod paths;
pub mod verify;

pub use error::{CliError, Result};
