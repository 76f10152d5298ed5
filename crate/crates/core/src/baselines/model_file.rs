use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{Bm25Ranker, KnnRanker, LambdaMartRanker, QueryLmRanker, StaticRanker};
use crate::ranking::Ranker;
use crate::text::load_embeddings;
use crate::{Error, Result};

pub const BASELINE_MAGIC: &str = "APPSELECT-BASELINE";
pub const BASELINE_VERSION: u32 = 1;

/// Any trained baseline, as stored on disk.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineModel {
    Static(StaticRanker),
    QueryLm(QueryLmRanker),
    Bm25(Bm25Ranker),
    Knn(KnnRanker),
    LambdaMart(LambdaMartRanker),
}

impl BaselineModel {
    pub fn ranker(&self) -> &dyn Ranker {
        match self {
            BaselineModel::Static(r) => r,
            BaselineModel::QueryLm(r) => r,
            BaselineModel::Bm25(r) => r,
            BaselineModel::Knn(r) => r,
            BaselineModel::LambdaMart(r) => r,
        }
    }

    fn awe_models(&mut self) -> Vec<&mut KnnRanker> {
        match self {
            BaselineModel::Knn(r) => vec![r],
            BaselineModel::LambdaMart(r) => vec![&mut r.features_mut().knn_awe],
            _ => Vec::new(),
        }
    }
}

/// Text format: magic line, `version N` line, then the model as JSON.
/// k-NN-AWE models store the embedding file path, not the table.
pub fn write_baseline(model: &BaselineModel, mut out: impl Write) -> Result<()> {
    writeln!(out, "{BASELINE_MAGIC}")?;
    writeln!(out, "version {BASELINE_VERSION}")?;
    serde_json::to_writer(&mut out, model).map_err(|e| Error::ModelFormat(e.to_string()))?;
    writeln!(out)?;
    Ok(())
}

pub fn save_baseline(model: &BaselineModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::file(path, e))?;
    let mut out = BufWriter::new(file);
    write_baseline(model, &mut out)?;
    out.flush().map_err(|e| Error::file(path, e))
}

/// Parse a baseline file. AWE embeddings are reloaded from their recorded
/// path; a model without one is returned unattached and ranks by popularity.
pub fn read_baseline(reader: impl Read) -> Result<BaselineModel> {
    let mut reader = BufReader::new(reader);
    let mut line = String::new();
    reader.read_line(&mut line)?;
    if line.trim_end() != BASELINE_MAGIC {
        return Err(Error::ModelFormat("not a baseline model file".into()));
    }
    line.clear();
    reader.read_line(&mut line)?;
    let version: u32 = line
        .trim_end()
        .strip_prefix("version ")
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| Error::ModelFormat(format!("bad version line `{}`", line.trim_end())))?;
    if version != BASELINE_VERSION {
        return Err(Error::ModelFormat(format!("unsupported version {version}")));
    }
    let mut model: BaselineModel =
        serde_json::from_reader(reader).map_err(|e| Error::ModelFormat(e.to_string()))?;
    for knn in model.awe_models() {
        if let Some(path) = knn.embeddings_path().map(Path::to_path_buf) {
            knn.attach_embeddings(Arc::new(load_embeddings(&path)?));
        }
    }
    Ok(model)
}

pub fn load_baseline(path: impl AsRef<Path>) -> Result<BaselineModel> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::file(path, e))?;
    read_baseline(file)
}
