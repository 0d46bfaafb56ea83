//! Run manifests: one `manifest.json` per artifact directory.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use crate::commands::Command;

pub const MANIFEST: &str = "manifest.json";

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    /// Every parameter of the run, enough to re-execute it.
    pub parameters: Command,
    pub inputs: Vec<PathBuf>,
    /// Artifact file names relative to the directory holding the manifest.
    pub outputs: Vec<String>,
    pub seed: Option<u64>,
    pub version: String,
    pub wall_time_seconds: f64,
}

impl RunManifest {
    pub fn write(&self, dir: &Path) -> Result<()> {
        let p = dir.join(MANIFEST);
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(&p, text).with_context(|| format!("cannot write {}", p.display()))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("manifest: cannot read {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("manifest: malformed {}", path.display()))
    }
}

/// Output files of `original` whose bytes differ in `replayed` (or are missing).
pub fn compare_outputs(original: &Path, replayed: &Path, outputs: &[String]) -> Vec<String> {
    outputs
        .iter()
        .filter(|name| {
            let a = std::fs::read(original.join(name));
            let b = std::fs::read(replayed.join(name));
            !matches!((a, b), (Ok(a), Ok(b)) if a == b)
        })
        .cloned()
        .collect()
}
