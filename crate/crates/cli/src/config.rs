//! Run configuration file. Every key is optional; command-line flags
//! override what the file sets.

use std::path::Path;

use serde::{Deserialize, Serialize};
use wake_core::detect::DetectConfig;
use wake_core::sim::CorpusParams;
use wake_core::solver::{PenaltyMode, SolverConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Master seed for corpus generation.
    pub seed: u64,
    /// Worker threads; 0 uses every core.
    pub jobs: usize,
    /// Scenes written by `simulate`.
    pub scenes: usize,
    /// Modes compared by `evaluate`.
    pub modes: Vec<PenaltyMode>,
    pub solver: SolverConfig,
    pub detect: DetectConfig,
    pub corpus: CorpusParams,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            jobs: 0,
            scenes: 20,
            modes: PenaltyMode::ALL.to_vec(),
            solver: SolverConfig::default(),
            detect: DetectConfig::default(),
            corpus: CorpusParams::default(),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: String,
        source: std::io::Error,
    },
    #[error("invalid config {path}: {source}")]
    Parse {
        path: String,
        source: toml::de::Error,
    },
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text).map_err(|source| ConfigError::Parse {
            path: path.display().to_string(),
            source,
        })
    }

    /// Canonical TOML; parsing it gives back an equal config.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}
