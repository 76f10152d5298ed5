use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

/// Replay record written next to every run's outputs.
#[derive(Debug, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub arguments: Vec<String>,
    pub seed: u64,
    /// How each component derives its stream from `seed`.
    pub sub_seeds: BTreeMap<&'static str, &'static str>,
    pub config: Option<serde_json::Value>,
    pub inputs: BTreeMap<String, String>,
    pub artifacts: BTreeMap<String, String>,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(format!("{:x}", Sha256::digest(&bytes)))
}

impl Manifest {
    pub fn new(command: &str, seed: u64) -> Self {
        let sub_seeds = BTreeMap::from([
            ("split", "derive_indexed(seed, \"split\", repetition)"),
            ("synth", "derive(seed, \"synth\")"),
            ("synth_embeddings", "derive(seed, \"synth-embeddings\")"),
            ("init", "derive(training_seed, \"init\")"),
            ("negatives", "derive_indexed(derive_indexed(training_seed, \"negatives\", epoch), \"record\", index)"),
            ("shuffle", "derive_indexed(training_seed, \"shuffle\", epoch)"),
            ("dropout", "derive_indexed(training_seed, \"dropout\", epoch)"),
            ("training_seed", "derive_indexed(seed, \"train/<method>\", repetition) in compare; seed otherwise"),
        ]);
        Manifest {
            tool: "appselect",
            version: env!("CARGO_PKG_VERSION"),
            command: command.to_string(),
            arguments: std::env::args().skip(1).collect(),
            seed,
            sub_seeds,
            config: None,
            inputs: BTreeMap::new(),
            artifacts: BTreeMap::new(),
        }
    }

    pub fn with_config(mut self, config: &impl Serialize) -> Result<Self> {
        self.config = Some(serde_json::to_value(config)?);
        Ok(self)
    }

    pub fn input(&mut self, path: &Path) -> Result<()> {
        self.inputs.insert(path.display().to_string(), sha256_file(path)?);
        Ok(())
    }

    /// Record the checksum of every file in `files`, keyed by file name.
    pub fn artifacts(&mut self, files: &[PathBuf]) -> Result<()> {
        for f in files {
            let name = f.file_name().map_or_else(|| f.display().to_string(), |n| n.to_string_lossy().into_owned());
            self.artifacts.insert(name, sha256_file(f)?);
        }
        Ok(())
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join("manifest.json");
        let json = serde_json::to_string_pretty(self)?;
        std::fs::write(&path, json + "\n").with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }
}
