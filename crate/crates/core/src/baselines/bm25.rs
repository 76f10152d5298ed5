use serde::{Deserialize, Serialize};

use super::bo1::{bo1_expand, Bo1Params};
use super::{InvertedIndex, RankContext};
use crate::corpus::{AppCatalog, Dataset};
use crate::ranking::{RankedList, Ranker};
use crate::text::{TermId, Tokenizer};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Bm25Params { k1: 1.2, b: 0.75 }
    }
}

/// `ln((N - df + 0.5) / (df + 0.5) + 1)`, always positive.
pub fn bm25_idf(n_docs: usize, df: u32) -> f64 {
    let (n, df) = (n_docs as f64, f64::from(df));
    ((n - df + 0.5) / (df + 0.5) + 1.0).ln()
}

pub fn bm25_term_score(tf: f64, doc_len: f64, avgdl: f64, idf: f64, params: Bm25Params) -> f64 {
    let norm = params.k1 * (1.0 - params.b + params.b * doc_len / avgdl);
    idf * tf * (params.k1 + 1.0) / (tf + norm)
}

/// Per-app BM25 scores. Apps without a document score `-inf`.
pub fn score_bm25<S: AsRef<str>>(index: &InvertedIndex, tokens: &[S], params: Bm25Params) -> Vec<f64> {
    score_bm25_weighted(index, &index.query_terms(tokens), params)
}

/// BM25 with per-term query weights multiplying each term's contribution.
pub fn score_bm25_weighted(
    index: &InvertedIndex,
    terms: &[(TermId, f64)],
    params: Bm25Params,
) -> Vec<f64> {
    let mut scores: Vec<f64> = (0..index.n_apps())
        .map(|a| {
            if index.document(crate::corpus::AppId(a as u32)).is_some() {
                0.0
            } else {
                f64::NEG_INFINITY
            }
        })
        .collect();
    let avgdl = index.avgdl();
    for &(term, weight) in terms {
        let idf = bm25_idf(index.n_docs(), index.vocab().df(term));
        for &(app, tf) in index.postings(term) {
            let len = f64::from(index.document(app).map_or(0, |d| d.length));
            scores[app.index()] += weight * bm25_term_score(f64::from(tf), len, avgdl, idf, params);
        }
    }
    scores
}

/// BM25 over app documents, optionally with Bo1 query expansion.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bm25Ranker {
    ctx: RankContext,
    index: InvertedIndex,
    params: Bm25Params,
    expansion: Option<Bo1Params>,
}

impl Bm25Ranker {
    pub fn train(train: &Dataset, params: Bm25Params, expansion: Option<Bo1Params>) -> Self {
        let tokenizer = Tokenizer::default();
        Bm25Ranker {
            index: InvertedIndex::build(train, &tokenizer),
            ctx: RankContext::from_train(train, &tokenizer),
            params,
            expansion,
        }
    }

    pub fn index(&self) -> &InvertedIndex {
        &self.index
    }

    pub fn scores(&self, text: &str) -> Vec<f64> {
        let tokens = self.ctx.tokenizer.tokenize(text);
        match self.expansion {
            None => score_bm25(&self.index, &tokens, self.params),
            Some(bo1) => {
                let expanded = bo1_expand(&self.index, &tokens, self.params, bo1);
                score_bm25_weighted(&self.index, &expanded, self.params)
            }
        }
    }
}

impl Ranker for Bm25Ranker {
    fn name(&self) -> &str {
        if self.expansion.is_some() {
            "BM25-QE"
        } else {
            "BM25"
        }
    }

    fn catalog(&self) -> &AppCatalog {
        &self.ctx.catalog
    }

    fn rank(&self, query_id: &str, text: &str) -> RankedList {
        RankedList::from_scores(query_id, &self.scores(text), self.ctx.popularity.positions())
    }
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;
    use crate::baselines::index::tests::toy_train;
    use crate::corpus::AppId;

    fn index() -> InvertedIndex {
        InvertedIndex::build(&toy_train(), &Tokenizer::default())
    }

    #[test]
    fn toy_scores_match_hand_evaluation() {
        let s = score_bm25(&index(), &["pizza", "sam"], Bm25Params::default());
        // independent evaluation of the formula over the toy documents
        assert!((s[0] - 0.9241962407465938).abs() < 1e-12);
        assert!((s[1] - 0.9838218046657289).abs() < 1e-12);
        assert_eq!(s[2], f64::NEG_INFINITY);
        let s = score_bm25(&index(), &["pizza", "pizza", "me"], Bm25Params::default());
        assert!((s[0] - 2.511402828115744).abs() < 1e-12);
        assert_eq!(s[1], 0.0);
    }

    #[test]
    fn matching_doc_outranks() {
        let r = Bm25Ranker::train(&toy_train(), Bm25Params::default(), None);
        let list = r.rank("q", "pizza");
        assert_eq!(list.entries[0].0, AppId(0));
        assert!(list.is_total_over(3));
        // no matching term: zero for documents, apps without one trail
        let s = r.scores("unknown words");
        assert_eq!(&s[..2], &[0.0, 0.0]);
        assert_eq!(r.rank("q", "unknown").entries[2].0, AppId(2));
    }

    proptest! {
        #[test]
        fn monotone_in_tf(tf in 0.0f64..50.0, dl in 1.0f64..100.0, avgdl in 1.0f64..50.0,
                          df in 1u32..10, k1 in 0.0f64..3.0, b in 0.0f64..=1.0) {
            let p = Bm25Params { k1, b };
            let idf = bm25_idf(10, df);
            prop_assert!(idf > 0.0);
            let lo = bm25_term_score(tf, dl, avgdl, idf, p);
            let hi = bm25_term_score(tf + 1.0, dl, avgdl, idf, p);
            prop_assert!(hi >= lo);
        }
    }
}
