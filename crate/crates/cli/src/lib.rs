//! Experiment runner for ECGR federated training: configuration, dataset
//! loading, multi-seed orchestration and file export.

pub mod commands;
pub mod config;
pub mod error;
pub mod experiment;
pub mod export;
pub mod idx;

pub use config::RunConfig;
pub use error::{CliError, Result};
