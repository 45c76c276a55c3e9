//! Record of one CLI invocation, written next to its outputs.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::error::Result;

pub const MANIFEST_FILE: &str = "manifest.json";
/// Resolved configuration written with every run; passing it back through
/// `--config` repeats the run exactly.
pub const RESOLVED_CONFIG_FILE: &str = "resolved-config.toml";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub experiment: String,
    pub arguments: Vec<String>,
    pub seed: u64,
    pub version: String,
    pub config_file: String,
    pub config: serde_json::Value,
    pub outputs: Vec<String>,
    pub wall_clock_s: f64,
}

impl RunManifest {
    pub fn new(experiment: &str, arguments: Vec<String>, config: &Config) -> Result<Self> {
        Ok(RunManifest {
            experiment: experiment.to_string(),
            arguments,
            seed: config.sim.seed,
            version: env!("CARGO_PKG_VERSION").to_string(),
            config_file: RESOLVED_CONFIG_FILE.to_string(),
            config: serde_json::to_value(config)?,
            outputs: Vec::new(),
            wall_clock_s: 0.0,
        })
    }

    /// Writes the resolved configuration and the manifest into `dir`.
    pub fn write(&self, dir: &Path, config: &Config) -> Result<()> {
        std::fs::write(dir.join(RESOLVED_CONFIG_FILE), config.to_toml_string()?)?;
        let file = std::fs::File::create(dir.join(MANIFEST_FILE))?;
        serde_json::to_writer_pretty(file, self)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Ok(serde_json::from_reader(std::fs::File::open(path)?)?)
    }
}
