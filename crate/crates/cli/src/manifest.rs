use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use meshcrash::io::sha256_hex;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Artifact {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

impl Artifact {
    pub fn of(path: &Path) -> Result<Self> {
        let data = fs::read(path).map_err(|e| CliError::io(path, e))?;
        Ok(Self {
            path: path.display().to_string(),
            sha256: sha256_hex(&data),
            bytes: data.len() as u64,
        })
    }
}

/// Record of one CLI invocation and every file it read or wrote.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: String,
    pub config_hash: String,
    pub seeds: Vec<u64>,
    pub inputs: Vec<Artifact>,
    pub outputs: Vec<Artifact>,
    pub wall_seconds: f64,
    /// Command-specific details such as sample ids and design vectors.
    #[serde(default, skip_serializing_if = "serde_json::Value::is_null")]
    pub details: serde_json::Value,
}

pub struct ManifestBuilder {
    command: String,
    config_hash: String,
    seeds: Vec<u64>,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
    details: serde_json::Value,
    start: Instant,
}

impl ManifestBuilder {
    pub fn new<C: Serialize>(command: &str, config: &C) -> Result<Self> {
        Ok(Self {
            command: command.to_string(),
            config_hash: sha256_hex(serde_json::to_string(config)?.as_bytes()),
            seeds: Vec::new(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            details: serde_json::Value::Null,
            start: Instant::now(),
        })
    }

    pub fn seed(&mut self, s: u64) -> &mut Self {
        self.seeds.push(s);
        self
    }

    pub fn input(&mut self, p: &Path) -> &mut Self {
        self.inputs.push(p.to_path_buf());
        self
    }

    pub fn output(&mut self, p: &Path) -> &mut Self {
        self.outputs.push(p.to_path_buf());
        self
    }

    pub fn details(&mut self, v: serde_json::Value) -> &mut Self {
        self.details = v;
        self
    }

    /// Hashes every artifact and writes the manifest to `path`.
    pub fn write(&self, path: &Path) -> Result<RunManifest> {
        let hash_all = |v: &[PathBuf]| v.iter().map(|p| Artifact::of(p)).collect::<Result<Vec<_>>>();
        let m = RunManifest {
            command: self.command.clone(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            config_hash: self.config_hash.clone(),
            seeds: self.seeds.clone(),
            inputs: hash_all(&self.inputs)?,
            outputs: hash_all(&self.outputs)?,
            wall_seconds: self.start.elapsed().as_secs_f64(),
            details: self.details.clone(),
        };
        fs::write(path, serde_json::to_string_pretty(&m)? + "\n").map_err(|e| CliError::io(path, e))?;
        Ok(m)
    }
}
