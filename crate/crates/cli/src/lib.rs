//! Command-line front end for the `chirpmod` simulator: experiment
//! configuration files, figure presets and CSV/report output.

pub mod commands;
pub mod config;

use thiserror::Error;

pub use config::{Curve, ExperimentConfig};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("resource limit: {0}")]
    Resource(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Resource(_) => 3,
            CliError::Io(_) => 1,
        }
    }
}

impl From<chirpmod::Error> for CliError {
    fn from(e: chirpmod::Error) -> Self {
        match e {
            chirpmod::Error::SearchSpaceTooLarge { .. } => CliError::Resource(e.to_string()),
            other => CliError::Config(other.to_string()),
        }
    }
}

/// Built-in configurations, one per reproduced figure or table.
pub const PRESETS: [(&str, &str); 7] = [
    ("fig3", include_str!("../presets/fig3.toml")),
    ("fig4", include_str!("../presets/fig4.toml")),
    ("fig5", include_str!("../presets/fig5.toml")),
    ("fig6", include_str!("../presets/fig6.toml")),
    ("fig7", include_str!("../presets/fig7.toml")),
    ("fig8", include_str!("../presets/fig8.toml")),
    ("table1", include_str!("../presets/table1.toml")),
];

pub fn preset(name: &str) -> Result<ExperimentConfig, CliError> {
    let (_, text) = PRESETS.iter().find(|(n, _)| *n == name).ok_or_else(|| {
        let known: Vec<&str> = PRESETS.iter().map(|(n, _)| *n).collect();
        CliError::Config(format!("unknown preset `{name}` (known: {})", known.join(", ")))
    })?;
    ExperimentConfig::from_toml(text)
}
