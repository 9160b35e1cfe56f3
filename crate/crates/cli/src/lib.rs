//! Configuration, experiment orchestration and CSV output for the
//! `feather` command.

pub mod bench;
pub mod calibrate;
pub mod config;
pub mod error;
pub mod experiment;
pub mod output;
pub mod sweep;

pub use config::{ExperimentConfig, SchedulerKind};
pub use error::CliError;
