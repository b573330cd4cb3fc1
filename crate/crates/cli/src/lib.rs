//! Command-line front end of memsq: configuration files, CSV and JSON
//! artifacts, and the resumable sweep store.

pub mod commands;
pub mod config;
pub mod error;
pub mod manifest;
pub mod output;
pub mod store;

pub use config::{parse_config, CommandOptions, Config, ConfigError};
pub use error::{exit, CliError};
pub use manifest::RunManifest;
pub use store::SweepStore;
