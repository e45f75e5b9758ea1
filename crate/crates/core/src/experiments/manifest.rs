use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::write_json;
use crate::error::Result;

/// One file written by a run, with the columns that carry wall-clock values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputFile {
    pub name: String,
    #[serde(default)]
    pub nondeterministic_columns: Vec<String>,
}

impl OutputFile {
    pub fn new(name: &str) -> Self {
        Self {
            name: name.to_string(),
            nondeterministic_columns: Vec::new(),
        }
    }

    pub fn timed(name: &str, columns: &[&str]) -> Self {
        Self {
            name: name.to_string(),
            nondeterministic_columns: columns.iter().map(|c| c.to_string()).collect(),
        }
    }
}

/// Record of a run: what was asked for, with which code, and how long it took.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub seed: u64,
    pub version: String,
    /// Full effective configuration after defaults and overrides.
    pub config: serde_json::Value,
    pub outputs: Vec<OutputFile>,
    /// Wall-clock seconds per phase.
    pub timings: BTreeMap<String, f64>,
}

impl Manifest {
    pub fn new<C: Serialize>(command: &str, seed: u64, config: &C) -> Result<Self> {
        Ok(Self {
            command: command.to_string(),
            seed,
            version: env!("CARGO_PKG_VERSION").to_string(),
            config: serde_json::to_value(config)?,
            outputs: Vec::new(),
            timings: BTreeMap::new(),
        })
    }

    pub fn config_as<C: for<'de> Deserialize<'de>>(&self) -> Result<C> {
        Ok(serde_json::from_value(self.config.clone())?)
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        write_json(&dir.join("manifest.json"), self)
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(dir.join("manifest.json"))?;
        Ok(serde_json::from_str(&text)?)
    }
}
