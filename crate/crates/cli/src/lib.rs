//! Configuration, presets and task runner behind the `bohmflow` binary.

pub mod config;
pub mod error;
pub mod presets;
pub mod run;

pub use config::{ConfigSource, RunConfig, Task};
pub use error::{CliError, ConfigError};
pub use presets::preset;
pub use run::{run, Outcome, RunOptions};
