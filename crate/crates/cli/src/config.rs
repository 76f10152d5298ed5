use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use appselect::corpus::{generate_synthetic, load_dataset, synthetic_embeddings, Dataset, SynthConfig};
use appselect::eval::{EmbeddingSource, ExperimentPlan};
use appselect::text::load_embeddings;
use serde::{Deserialize, Serialize};

/// Vectors generated alongside a synthetic dataset when no embedding file is given.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticEmbeddings {
    pub dim: usize,
    pub spread: f64,
}

impl Default for SyntheticEmbeddings {
    fn default() -> Self {
        SyntheticEmbeddings { dim: 32, spread: 0.5 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Emit {
    pub per_query: bool,
    pub svg: bool,
}

impl Default for Emit {
    fn default() -> Self {
        Emit {
            per_query: true,
            svg: false,
        }
    }
}

/// Everything a run needs, read from a TOML file and overridden by flags.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Query log in JSON lines; when absent the `synth` section is used.
    pub dataset: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub threads: Option<usize>,
    pub synth: Option<SynthConfig>,
    pub synthetic_embeddings: SyntheticEmbeddings,
    pub experiment: ExperimentPlan,
    pub emit: Emit,
}

impl RunConfig {
    /// Parse a config file; relative paths inside it resolve against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut config: RunConfig = toml::from_str(&text)
            .map_err(|e| appselect::Error::InvalidConfig(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut config.dataset, &mut config.embeddings, &mut config.out].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(config)
    }

    pub fn load_or_default(path: Option<&Path>) -> Result<Self> {
        path.map_or_else(|| Ok(RunConfig::default()), RunConfig::load)
    }

    /// Push the top-level seed into every component that draws randomness.
    pub fn resolve(&mut self) {
        self.experiment.seed = self.seed;
        self.experiment.params.training.seed = self.seed;
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).context("serializing the resolved config")
    }

    pub fn synth_config(&self) -> SynthConfig {
        self.synth.clone().unwrap_or_default()
    }

    pub fn dataset(&self) -> Result<Dataset> {
        match &self.dataset {
            Some(path) => Ok(load_dataset(path)?),
            None => Ok(generate_synthetic(&self.synth_config(), self.seed)?),
        }
    }

    /// The embedding file if one is configured; otherwise generated vectors
    /// for a synthetic dataset; otherwise none.
    pub fn embeddings(&self) -> Result<Option<EmbeddingSource>> {
        if let Some(path) = &self.embeddings {
            return Ok(Some(EmbeddingSource {
                table: std::sync::Arc::new(load_embeddings(path)?),
                path: Some(path.clone()),
            }));
        }
        if self.dataset.is_none() {
            let e = &self.synthetic_embeddings;
            let table = synthetic_embeddings(&self.synth_config(), e.dim, e.spread, self.seed)?;
            return Ok(Some(EmbeddingSource {
                table: std::sync::Arc::new(table),
                path: None,
            }));
        }
        Ok(None)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_partial_config_and_resolves_paths() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(
            &path,
            r#"
dataset = "data.jsonl"
seed = 7

[experiment]
methods = ["bm25", "ntas2"]
repetitions = 2

[experiment.params.training]
epochs = 3
"#,
        )
        .unwrap();
        let mut c = RunConfig::load(&path).unwrap();
        c.resolve();
        assert_eq!(c.dataset.as_deref(), Some(dir.path().join("data.jsonl").as_path()));
        assert_eq!(c.experiment.repetitions, 2);
        assert_eq!(c.experiment.seed, 7);
        assert_eq!(c.experiment.params.training.epochs, 3);
        let back: RunConfig = toml::from_str(&c.to_toml().unwrap()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn unknown_keys_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.toml");
        std::fs::write(&path, "sede = 3\n").unwrap();
        assert!(RunConfig::load(&path).is_err());
    }
}
