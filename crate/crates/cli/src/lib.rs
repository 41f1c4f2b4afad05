//! Scenario files, trace and summary formats, and the replication suites
//! behind the `apportion` command.

pub mod config;
pub mod replicate;
pub mod run;
pub mod trace;

pub use config::{ConfigError, Scenario, ScenarioConfig};
