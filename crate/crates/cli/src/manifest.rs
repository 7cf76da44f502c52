//! Provenance sidecars written next to every file artifact.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

/// Inputs, configuration and outputs of one command. Contains no clock
/// readings, so identical runs produce identical sidecars.
#[derive(Debug, Serialize)]
pub struct Manifest {
    pub command: String,
    pub args: Vec<String>,
    pub seed: u64,
    pub config: serde_json::Value,
    /// Path to hex SHA-256 of the file contents.
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).with_context(|| format!("cannot read {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(bytes)))
}

pub fn sidecar_path(artifact: &Path) -> PathBuf {
    let mut s = artifact.as_os_str().to_owned();
    s.push(".manifest.json");
    s.into()
}

impl Manifest {
    pub fn new(command: &str, seed: u64, config: serde_json::Value) -> Self {
        Manifest {
            command: command.to_string(),
            args: std::env::args().skip(1).collect(),
            seed,
            config,
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
        }
    }

    pub fn input(&mut self, path: &Path) -> Result<()> {
        if path.is_dir() {
            for entry in walk(path)? {
                self.inputs.insert(entry.display().to_string(), sha256_file(&entry)?);
            }
        } else {
            self.inputs.insert(path.display().to_string(), sha256_file(path)?);
        }
        Ok(())
    }

    /// Hashes `outputs` and writes the sidecar next to the first of them.
    pub fn write(mut self, outputs: &[&Path]) -> Result<()> {
        let Some(primary) = outputs.first() else { return Ok(()) };
        for p in outputs {
            self.outputs.insert(p.display().to_string(), sha256_file(p)?);
        }
        let side = sidecar_path(primary);
        let text = serde_json::to_string_pretty(&self)? + "\n";
        std::fs::write(&side, text).with_context(|| format!("cannot write {}", side.display()))
    }
}

/// Every regular file below `dir`, in sorted order.
fn walk(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    let mut entries: Vec<PathBuf> = std::fs::read_dir(dir)
        .with_context(|| format!("cannot list {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .collect();
    entries.sort();
    for p in entries {
        if p.is_dir() {
            out.extend(walk(&p)?);
        } else if p.is_file() {
            out.push(p);
        }
    }
    Ok(out)
}
