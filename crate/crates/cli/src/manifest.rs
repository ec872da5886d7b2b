//! Run manifests: the flags, seeds and file digests behind an output.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Debug, Serialize)]
pub struct Manifest {
    command: String,
    version: &'static str,
    args: Vec<String>,
    seeds: BTreeMap<String, u64>,
    inputs: BTreeMap<String, String>,
    outputs: BTreeMap<String, String>,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).with_context(|| format!("hashing {}", path.display()))?;
    Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}

impl Manifest {
    pub fn new(command: &str) -> Self {
        Manifest {
            command: command.to_owned(),
            version: env!("CARGO_PKG_VERSION"),
            args: std::env::args().skip(1).collect(),
            seeds: BTreeMap::new(),
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
        }
    }

    pub fn seed(mut self, name: &str, value: u64) -> Self {
        self.seeds.insert(name.to_owned(), value);
        self
    }

    fn digest_all(map: &mut BTreeMap<String, String>, paths: &[PathBuf]) -> Result<()> {
        for p in paths {
            map.insert(p.display().to_string(), sha256_file(p)?);
        }
        Ok(())
    }

    pub fn inputs(mut self, paths: &[PathBuf]) -> Result<Self> {
        Self::digest_all(&mut self.inputs, paths)?;
        Ok(self)
    }

    pub fn outputs(mut self, paths: &[PathBuf]) -> Result<Self> {
        Self::digest_all(&mut self.outputs, paths)?;
        Ok(self)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
    }
}
