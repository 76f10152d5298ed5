use std::io::Write;
use std::path::PathBuf;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{Bm25Params, Bm25Ranker, KnnRanker};
use crate::corpus::{AppCatalog, Dataset, QueryRecord};
use crate::text::WordEmbeddingTable;
use crate::Result;

pub const FEATURE_NAMES: [&str; 3] = ["bm25", "knn", "knn_awe"];

/// Per-app feature rows for one query, with the record's gains when known.
#[derive(Clone, Debug, PartialEq)]
pub struct QueryFeatures {
    pub query_id: String,
    /// One row per catalog app, indexed by app id.
    pub rows: Vec<[f64; 3]>,
    /// Gain per catalog app (0 for non-targets).
    pub gains: Vec<u8>,
}

/// The three first-stage scorers whose outputs feed the learned ranker.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureExtractor {
    pub bm25: Bm25Ranker,
    pub knn: KnnRanker,
    pub knn_awe: KnnRanker,
}

impl FeatureExtractor {
    /// Fit BM25, k-NN and k-NN-AWE on `train` with their default parameters.
    pub fn train(
        train: &Dataset,
        knn_k: usize,
        table: Arc<WordEmbeddingTable>,
        embeddings_path: Option<PathBuf>,
    ) -> Self {
        FeatureExtractor {
            bm25: Bm25Ranker::train(train, Bm25Params::default(), None),
            knn: KnnRanker::train_tfidf(train, knn_k),
            knn_awe: KnnRanker::train_awe(train, knn_k, table, embeddings_path),
        }
    }

    /// Feature rows for every catalog app; apps without a BM25 document get 0.
    pub fn rows(&self, text: &str) -> Result<Vec<[f64; 3]>> {
        let bm25 = self.bm25.scores(text);
        let knn = self.knn.scores(text)?;
        let awe = self.knn_awe.scores(text)?;
        Ok(bm25
            .iter()
            .zip(&knn)
            .zip(&awe)
            .map(|((&b, &k), &a)| [if b.is_finite() { b } else { 0.0 }, k, a])
            .collect())
    }

    pub fn query_features(&self, record: &QueryRecord) -> Result<QueryFeatures> {
        let rows = self.rows(&record.text)?;
        let mut gains = vec![0; rows.len()];
        for (app, gain) in record.gains() {
            gains[app.index()] = gain;
        }
        Ok(QueryFeatures {
            query_id: record.query_id.clone(),
            rows,
            gains,
        })
    }

    pub fn dataset_features(&self, data: &Dataset) -> Result<Vec<QueryFeatures>> {
        data.records().iter().map(|r| self.query_features(r)).collect()
    }
}

/// CSV with columns `query_id,app,bm25,knn,knn_awe,gain`.
pub fn write_feature_csv(
    features: &[QueryFeatures],
    catalog: &AppCatalog,
    mut out: impl Write,
) -> Result<()> {
    writeln!(out, "query_id,app,{},gain", FEATURE_NAMES.join(","))?;
    for q in features {
        for (app, (row, gain)) in catalog.ids().zip(q.rows.iter().zip(&q.gains)) {
            writeln!(
                out,
                "{},{},{},{},{},{}",
                q.query_id,
                catalog.name(app),
                row[0],
                row[1],
                row[2],
                gain
            )?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baselines::index::tests::toy_train;
    use crate::text::read_embeddings;

    #[test]
    fn rows_cover_catalog_and_csv_lines_match() {
        let train = toy_train();
        let table = read_embeddings("pizza 1 0\nsam 0 1\n".as_bytes()).unwrap();
        let fx = FeatureExtractor::train(&train, 10, Arc::new(table), None);
        let feats = fx.dataset_features(&train).unwrap();
        assert_eq!(feats.len(), 4);
        for f in &feats {
            assert_eq!(f.rows.len(), 3);
            assert!(f.rows.iter().flatten().all(|v| v.is_finite()));
            // the undocumented app gets a zero bm25 feature
            assert_eq!(f.rows[2][0], 0.0);
        }
        assert_eq!(feats[0].gains, vec![2, 0, 0]);
        let mut buf = Vec::new();
        write_feature_csv(&feats, train.apps(), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 1 + 4 * 3);
        assert!(text.starts_with("query_id,app,bm25,knn,knn_awe,gain\n1,pizza,"));
    }
}
