//! Configuration files, CSV export, run manifests, parallel drivers and the
//! `reinsure` command line on top of `reinsure-core`.

pub mod cli;
pub mod config;
pub mod figures;
pub mod manifest;
pub mod output;
pub mod pipeline;

pub use cli::{run, Cli, Command};
pub use config::{Config, ConfigError, Param};
pub use manifest::Manifest;
pub use output::Table;
pub use pipeline::{Observable, RunError, SweepSpec};
