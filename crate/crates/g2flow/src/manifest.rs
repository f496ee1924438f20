//! Run manifests: one per invocation, tying outputs to the exact inputs.

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config_digest: String,
    pub seed: u64,
    pub calibrated_a: Option<f64>,
    pub code_version: String,
    pub wall_time_s: f64,
    pub outcome: String,
}

impl RunManifest {
    pub fn new(command: &str, digest_input: &str, seed: u64) -> Self {
        Self {
            command: command.to_string(),
            config_digest: format!("{:016x}", fnv1a64(digest_input.as_bytes())),
            seed,
            calibrated_a: None,
            code_version: env!("CARGO_PKG_VERSION").to_string(),
            wall_time_s: 0.0,
            outcome: String::new(),
        }
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(dir.join("manifest.json"), text + "\n")
            .with_context(|| format!("writing manifest in {}", dir.display()))
    }
}

/// FNV-1a 64-bit content hash; stable and dependency free.
pub fn fnv1a64(data: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for b in data {
        hash ^= *b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}
