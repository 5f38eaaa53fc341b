//! Run manifests: what produced an output file, down to the table bytes.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use windiff::calibration::CalibrationSet;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: Vec<String>,
    pub seed: u64,
    pub config: Value,
    /// Measure id to SHA-256 of the calibration table file.
    pub tables: BTreeMap<String, String>,
    /// Output file name to SHA-256 of its contents.
    pub outputs: BTreeMap<String, String>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn file_digest(path: &Path) -> Result<String> {
    let bytes = fs::read(path).with_context(|| format!("cannot read {}", path.display()))?;
    Ok(sha256_hex(&bytes))
}

impl RunManifest {
    pub fn new(seed: u64, config: Value) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: std::env::args().collect(),
            seed,
            config,
            tables: BTreeMap::new(),
            outputs: BTreeMap::new(),
        }
    }

    /// Record the digest of every table in `set` that came from a file.
    pub fn add_tables(&mut self, set: &CalibrationSet) -> Result<()> {
        for id in set.measures() {
            if let Some(path) = set.source(id) {
                self.tables.insert(id.to_string(), file_digest(path)?);
            }
        }
        Ok(())
    }

    pub fn add_output(&mut self, path: &Path) -> Result<()> {
        let name = path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| path.display().to_string());
        self.outputs.insert(name, file_digest(path)?);
        Ok(())
    }

    /// Sidecar path of an output file.
    pub fn path_for(output: &Path) -> PathBuf {
        let mut name = output.file_name().unwrap_or_default().to_os_string();
        name.push(".manifest.json");
        output.with_file_name(name)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self)? + "\n")
            .with_context(|| format!("cannot write {}", path.display()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digest_and_sidecar() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
        assert_eq!(
            RunManifest::path_for(Path::new("out/records.csv")),
            PathBuf::from("out/records.csv.manifest.json")
        );
    }
}
