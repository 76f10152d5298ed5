use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::RankContext;
use crate::corpus::{AppCatalog, AppId, Dataset};
use crate::ranking::{RankedList, Ranker};
use crate::text::{average_word_embedding, cosine_dense, tfidf, SparseVector, Tokenizer, Vocabulary, WordEmbeddingTable};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KnnRepr {
    Tfidf,
    Awe,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
enum QueryVectors {
    Tfidf {
        vocab: Vocabulary,
        vectors: Vec<SparseVector>,
    },
    Awe {
        vectors: Vec<Vec<f64>>,
        embeddings_path: Option<PathBuf>,
        #[serde(skip)]
        table: Option<Arc<WordEmbeddingTable>>,
    },
}

/// Nearest training queries vote for their target apps with weight
/// `cosine * gain`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct KnnRanker {
    ctx: RankContext,
    k: usize,
    vectors: QueryVectors,
    gains: Vec<Vec<(AppId, u8)>>,
}

impl KnnRanker {
    pub fn train_tfidf(train: &Dataset, k: usize) -> Self {
        let tokenizer = Tokenizer::default();
        let docs: Vec<Vec<String>> = train
            .records()
            .iter()
            .map(|r| tokenizer.tokenize(&r.text))
            .collect();
        let vocab = Vocabulary::build(docs.iter());
        let n = docs.len();
        let vectors = docs.iter().map(|d| tfidf(d, &vocab, n)).collect();
        Self::assemble(train, tokenizer, k, QueryVectors::Tfidf { vocab, vectors })
    }

    /// `embeddings_path` is recorded so a saved model can reload the table.
    pub fn train_awe(
        train: &Dataset,
        k: usize,
        table: Arc<WordEmbeddingTable>,
        embeddings_path: Option<PathBuf>,
    ) -> Self {
        let tokenizer = Tokenizer::default();
        let vectors = train
            .records()
            .iter()
            .map(|r| average_word_embedding(&tokenizer.tokenize(&r.text), &table))
            .collect();
        Self::assemble(
            train,
            tokenizer,
            k,
            QueryVectors::Awe {
                vectors,
                embeddings_path,
                table: Some(table),
            },
        )
    }

    fn assemble(train: &Dataset, tokenizer: Tokenizer, k: usize, vectors: QueryVectors) -> Self {
        KnnRanker {
            ctx: RankContext::from_train(train, &tokenizer),
            k: k.max(1),
            vectors,
            gains: train.records().iter().map(|r| r.gains()).collect(),
        }
    }

    pub fn repr(&self) -> KnnRepr {
        match self.vectors {
            QueryVectors::Tfidf { .. } => KnnRepr::Tfidf,
            QueryVectors::Awe { .. } => KnnRepr::Awe,
        }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub(crate) fn embeddings_path(&self) -> Option<&Path> {
        match &self.vectors {
            QueryVectors::Awe { embeddings_path, .. } => embeddings_path.as_deref(),
            QueryVectors::Tfidf { .. } => None,
        }
    }

    /// Reattach the embedding table of a deserialized AWE model.
    pub(crate) fn attach_embeddings(&mut self, loaded: Arc<WordEmbeddingTable>) {
        if let QueryVectors::Awe { table, .. } = &mut self.vectors {
            *table = Some(loaded);
        }
    }

    /// Cosine similarity of the query to every training query.
    pub fn similarities(&self, text: &str) -> Result<Vec<f64>> {
        let tokens = self.ctx.tokenizer.tokenize(text);
        match &self.vectors {
            QueryVectors::Tfidf { vocab, vectors } => {
                let q = tfidf(&tokens, vocab, vectors.len());
                Ok(vectors.iter().map(|v| q.cosine(v)).collect())
            }
            QueryVectors::Awe { vectors, table, .. } => {
                let table = table
                    .as_ref()
                    .ok_or_else(|| Error::ModelFormat("k-NN-AWE model has no embeddings".into()))?;
                let q = average_word_embedding(&tokens, table);
                Ok(vectors.iter().map(|v| cosine_dense(&q, v)).collect())
            }
        }
    }

    /// Gain-weighted cosine votes from the `k` most similar training queries
    /// (ties in similarity broken by training order).
    pub fn scores(&self, text: &str) -> Result<Vec<f64>> {
        let sims = self.similarities(text)?;
        let mut order: Vec<usize> = (0..sims.len()).collect();
        order.sort_by(|&a, &b| sims[b].total_cmp(&sims[a]).then(a.cmp(&b)));
        let mut scores = vec![0.0; self.ctx.catalog.len()];
        for &i in order.iter().take(self.k) {
            if sims[i] <= 0.0 {
                break;
            }
            for &(app, gain) in &self.gains[i] {
                scores[app.index()] += sims[i] * f64::from(gain);
            }
        }
        Ok(scores)
    }
}

impl PartialEq for KnnRanker {
    fn eq(&self, other: &Self) -> bool {
        // embedding tables are compared through the vectors derived from them
        let vectors_eq = match (&self.vectors, &other.vectors) {
            (
                QueryVectors::Tfidf { vocab: a, vectors: va },
                QueryVectors::Tfidf { vocab: b, vectors: vb },
            ) => a == b && va == vb,
            (
                QueryVectors::Awe { vectors: va, embeddings_path: pa, .. },
                QueryVectors::Awe { vectors: vb, embeddings_path: pb, .. },
            ) => va == vb && pa == pb,
            _ => false,
        };
        vectors_eq && self.ctx == other.ctx && self.k == other.k && self.gains == other.gains
    }
}

impl Ranker for KnnRanker {
    fn name(&self) -> &str {
        match self.repr() {
            KnnRepr::Tfidf => "k-NN",
            KnnRepr::Awe => "k-NN-AWE",
        }
    }

    fn catalog(&self) -> &AppCatalog {
        &self.ctx.catalog
    }

    fn rank(&self, query_id: &str, text: &str) -> RankedList {
        // a missing table degrades to the popularity order
        let scores = self
            .scores(text)
            .unwrap_or_else(|_| vec![0.0; self.ctx.catalog.len()]);
        RankedList::from_scores(query_id, &scores, self.ctx.popularity.positions())
    }
}
