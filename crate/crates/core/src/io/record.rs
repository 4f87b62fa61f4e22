//! Run metadata written next to the CSV outputs.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;

use crate::error::Result;
use crate::io::scenario::Scenario;

pub const VERSION_TAG: &str = concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Clone, Serialize)]
pub struct RunRecord {
    pub command: String,
    pub version: String,
    pub carcass: String,
    pub lbar_rule: String,
    /// Effective configuration.
    pub config: serde_json::Value,
    pub wall_time_s: f64,
    pub outputs: Vec<String>,
    /// Command-specific results and findings.
    pub notes: BTreeMap<String, serde_json::Value>,
}

impl RunRecord {
    pub fn new(command: &str, scenario: &Scenario) -> Self {
        Self {
            command: command.to_string(),
            version: VERSION_TAG.to_string(),
            carcass: scenario.carcass.name().to_string(),
            lbar_rule: scenario.params.lbar_rule.name().to_string(),
            config: serde_json::to_value(&scenario.file).expect("scenario serializes"),
            wall_time_s: 0.0,
            outputs: Vec::new(),
            notes: BTreeMap::new(),
        }
    }

    pub fn note<V: Serialize>(&mut self, key: &str, value: V) {
        self.notes
            .insert(key.to_string(), serde_json::to_value(value).expect("note serializes"));
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        let text = serde_json::to_string_pretty(self).expect("record serializes");
        std::fs::write(path, text + "\n")?;
        Ok(())
    }
}
