//! Configuration, command dispatch and file output for the neural-field
//! laboratory. The numerics live in `nflab_core`.

pub mod commands;
pub mod config;
pub mod io;
pub mod runner;

pub use commands::{run, Command, Outcome};
pub use config::{parse_config, parse_str, Loaded, RunConfig};
