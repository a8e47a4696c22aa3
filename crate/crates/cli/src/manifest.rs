//! Run manifests: everything needed to re-execute a run identically.
//!
//! `argv` holds the subcommand and every flag with its resolved value, so
//! `panda <argv...>` reproduces the run bit for bit (wall time aside).

use panda_core::error::{Error, Result};
use serde::Serialize;
use std::path::Path;

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub subcommand: String,
    pub argv: Vec<String>,
    pub seed: u64,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub wall_time_secs: f64,
}

impl RunManifest {
    pub fn new(subcommand: &str, argv: Vec<String>, seed: u64) -> Self {
        Self {
            tool: "panda".to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            subcommand: subcommand.to_string(),
            argv,
            seed,
            inputs: Vec::new(),
            outputs: Vec::new(),
            wall_time_secs: 0.0,
        }
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let json = serde_json::to_string_pretty(self)
            .map_err(|e| Error::Parse(format!("manifest serialization: {e}")))?;
        std::fs::write(dir.join("manifest.json"), json + "\n")?;
        Ok(())
    }
}
