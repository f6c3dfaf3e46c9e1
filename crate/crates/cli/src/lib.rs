//! Configuration and pipelines of the `blaschke` command-line tool.

pub mod config;
pub mod pipeline;

pub use config::{ConfigError, GridSpec, RunConfig};
pub use pipeline::{Artifact, Report, Session};
