use serde::{Deserialize, Serialize};

use super::{InvertedIndex, RankContext};
use crate::corpus::{AppCatalog, AppId, Dataset};
use crate::ranking::{RankedList, Ranker};
use crate::text::Tokenizer;

/// Dirichlet-smoothed query log-likelihood per app.
///
/// `sum_w log((tf(w,d) + mu * p(w|C)) / (|d| + mu))` over query tokens seen
/// in the collection; apps without a document score `-inf`.
pub fn score_query_lm<S: AsRef<str>>(index: &InvertedIndex, tokens: &[S], mu: f64) -> Vec<f64> {
    let terms = index.query_terms(tokens);
    let total = index.vocab().total_terms() as f64;
    (0..index.n_apps())
        .map(|a| {
            let app = AppId(a as u32);
            let Some(doc) = index.document(app) else {
                return f64::NEG_INFINITY;
            };
            let denom = f64::from(doc.length) + mu;
            terms
                .iter()
                .map(|&(term, count)| {
                    let p_c = index.vocab().cf(term) as f64 / total;
                    let tf = f64::from(doc.terms.get(&term).copied().unwrap_or(0));
                    count * ((tf + mu * p_c) / denom).ln()
                })
                .sum()
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QueryLmRanker {
    ctx: RankContext,
    index: InvertedIndex,
    mu: f64,
}

impl QueryLmRanker {
    pub fn train(train: &Dataset, mu: f64) -> Self {
        let tokenizer = Tokenizer::default();
        QueryLmRanker {
            index: InvertedIndex::build(train, &tokenizer),
            ctx: RankContext::from_train(train, &tokenizer),
            mu,
        }
    }

    pub fn scores(&self, text: &str) -> Vec<f64> {
        score_query_lm(&self.index, &self.ctx.tokenizer.tokenize(text), self.mu)
    }
}

impl Ranker for QueryLmRanker {
    fn name(&self) -> &str {
        "QueryLM"
    }

    fn catalog(&self) -> &AppCatalog {
        &self.ctx.catalog
    }

    fn rank(&self, query_id: &str, text: &str) -> RankedList {
        RankedList::from_scores(query_id, &self.scores(text), self.ctx.popularity.positions())
    }
}
