use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::hex;
use crate::error::{CliError, Result};
use crate::formats::{write_json, SCHEMA_VERSION};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

/// Provenance record written next to every command's outputs. Contains no
/// timestamps so identical runs produce identical manifests.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Manifest {
    pub schema_version: u32,
    pub command: String,
    pub version: String,
    pub config_hash: String,
    pub seed: u64,
    pub config: serde_json::Value,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
}

pub fn file_sha256(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(hex(&Sha256::digest(&bytes)))
}

fn digest(path: &Path, relative_to: Option<&Path>) -> Result<FileDigest> {
    let shown = relative_to
        .and_then(|base| path.strip_prefix(base).ok())
        .unwrap_or(path);
    Ok(FileDigest {
        path: shown.display().to_string(),
        sha256: file_sha256(path)?,
    })
}

impl Manifest {
    pub fn new<C: Serialize>(command: &str, config: &C, config_hash: String, seed: u64) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config_hash,
            seed,
            config: serde_json::to_value(config).expect("config serializes"),
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn input(&mut self, path: &Path) -> Result<()> {
        self.inputs.push(digest(path, None)?);
        Ok(())
    }

    /// Records outputs and writes `manifest.json` into `dir`.
    pub fn finish(mut self, dir: &Path, outputs: &[PathBuf]) -> Result<PathBuf> {
        for p in outputs {
            self.outputs.push(digest(p, Some(dir))?);
        }
        let path = dir.join("manifest.json");
        write_json(&path, &self)?;
        Ok(path)
    }

    /// Reads `manifest.json` from `dir`.
    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join("manifest.json");
        let text = fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Re-hashes the recorded outputs and reports the first mismatch.
    pub fn verify(&self, dir: &Path) -> Result<()> {
        for o in &self.outputs {
            let actual = file_sha256(&dir.join(&o.path))?;
            if actual != o.sha256 {
                return Err(CliError::data(dir.join(&o.path), "digest does not match manifest"));
            }
        }
        Ok(())
    }
}
