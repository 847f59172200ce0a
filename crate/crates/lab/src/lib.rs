//! Reproducible experiments over `sincere-core`: TOML configs, JSON/CSV
//! reports and the `sincere` command-line tool.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;
pub mod trends;

pub use commands::Command;
pub use config::LabConfig;
pub use error::{LabError, Result};
