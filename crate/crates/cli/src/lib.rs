//! Configuration, presets and dataset writers behind the `polaron` binary.

pub mod config;
pub mod plots;
pub mod presets;
pub mod run;

pub use config::{emit_config, parse_config, Cell, ConfigError, RunConfig};
pub use presets::Preset;
pub use run::{run, Command, RunError, RunSummary};
