//! Batch front-end for the walk simulator: JSON run configurations, the five
//! command verbs, and the binary snapshot / CSV output formats.

pub mod commands;
pub mod config;
pub mod error;
pub mod snapshot;

pub use config::{parse_config, Initial, LatticeKind, Observable, RunConfig};
pub use error::CliError;
