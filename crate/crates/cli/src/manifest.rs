//! Run manifest written next to every command's outputs. The `argv` field
//! holds the fully resolved command line (every default materialized), so a
//! run can be reproduced by invoking the binary with exactly those arguments.

use std::path::Path;

use serde::{Deserialize, Serialize};

#[derive(Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub version: String,
    pub seed: u64,
    /// Resolved argument vector (without the program name).
    pub argv: Vec<String>,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    /// All resolved options as a JSON object.
    pub options: serde_json::Value,
    /// Wall-clock duration of the run; informational, not reproducible.
    pub wall_time_s: f64,
}

impl RunManifest {
    pub fn write(&self, dir: &Path) -> std::io::Result<()> {
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(dir.join("manifest.json"), text)
    }
}
