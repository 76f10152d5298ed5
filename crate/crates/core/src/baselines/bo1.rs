use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::bm25::{score_bm25_weighted, Bm25Params};
use super::InvertedIndex;
use crate::corpus::AppId;
use crate::text::TermId;

/// Divergence-from-randomness (Bo1) pseudo-relevance feedback settings.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Bo1Params {
    pub fb_docs: usize,
    pub fb_terms: usize,
    /// Weight given to the strongest expansion term.
    pub interpolation: f64,
}

impl Default for Bo1Params {
    fn default() -> Self {
        Bo1Params {
            fb_docs: 3,
            fb_terms: 10,
            interpolation: 0.4,
        }
    }
}

/// `tf_x * log2((1 + Pn) / Pn) + log2(1 + Pn)`.
pub fn bo1_weight(tf_x: f64, p_n: f64) -> f64 {
    tf_x * ((1.0 + p_n) / p_n).log2() + (1.0 + p_n).log2()
}

/// Bo1 weight of every term occurring in the feedback documents, with
/// `Pn = cf / N_docs`. Sorted by weight descending, then term id.
pub fn bo1_term_weights(index: &InvertedIndex, feedback: &[AppId]) -> Vec<(TermId, f64)> {
    let mut tf_x: BTreeMap<TermId, f64> = BTreeMap::new();
    for &app in feedback {
        if let Some(doc) = index.document(app) {
            for (&term, &tf) in &doc.terms {
                *tf_x.entry(term).or_default() += f64::from(tf);
            }
        }
    }
    let n_docs = index.n_docs() as f64;
    let mut weights: Vec<(TermId, f64)> = tf_x
        .into_iter()
        .map(|(term, tf)| {
            let p_n = index.vocab().cf(term) as f64 / n_docs;
            (term, bo1_weight(tf, p_n))
        })
        .collect();
    weights.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    weights
}

/// Expand a query: original terms at their occurrence counts plus the top
/// `fb_terms` Bo1 terms at `interpolation * w / max w`. A re-selected
/// original term gets both weights added.
pub fn bo1_expand<S: AsRef<str>>(
    index: &InvertedIndex,
    tokens: &[S],
    bm25: Bm25Params,
    params: Bo1Params,
) -> Vec<(TermId, f64)> {
    let original = index.query_terms(tokens);
    if params.fb_terms == 0 || params.fb_docs == 0 || original.is_empty() {
        return original;
    }
    let first_pass = score_bm25_weighted(index, &original, bm25);
    let mut ranked: Vec<usize> = (0..first_pass.len())
        .filter(|&a| first_pass[a].is_finite() && first_pass[a] > 0.0)
        .collect();
    ranked.sort_by(|&a, &b| first_pass[b].total_cmp(&first_pass[a]).then(a.cmp(&b)));
    ranked.truncate(params.fb_docs);
    let feedback: Vec<AppId> = ranked.into_iter().map(|a| AppId(a as u32)).collect();

    let mut selected = bo1_term_weights(index, &feedback);
    selected.truncate(params.fb_terms);
    let Some(&(_, max_w)) = selected.first() else {
        return original;
    };
    let mut weights: BTreeMap<TermId, f64> = original.into_iter().collect();
    for (term, w) in selected {
        *weights.entry(term).or_default() += params.interpolation * w / max_w;
    }
    weights.into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baselines::bm25::score_bm25;
    use crate::baselines::index::tests::toy_train;
    use crate::text::Tokenizer;

    fn index() -> InvertedIndex {
        InvertedIndex::build(&toy_train(), &Tokenizer::default())
    }

    #[test]
    fn absent_term_gets_only_the_constant() {
        assert_eq!(bo1_weight(0.0, 0.5), 1.5f64.log2());
        // same Pn: a present term always beats an absent one
        assert!(bo1_weight(1.0, 0.5) > bo1_weight(0.0, 0.5));
    }

    #[test]
    fn zero_expansion_terms_is_bit_identical() {
        let idx = index();
        let params = Bo1Params {
            fb_terms: 0,
            ..Bo1Params::default()
        };
        for q in [&["pizza", "sam"][..], &["me", "me", "places"], &["nothing"]] {
            let plain = score_bm25(&idx, q, Bm25Params::default());
            let expanded = bo1_expand(&idx, q, Bm25Params::default(), params);
            let second = score_bm25_weighted(&idx, &expanded, Bm25Params::default());
            assert_eq!(
                plain.iter().map(|x| x.to_bits()).collect::<Vec<_>>(),
                second.iter().map(|x| x.to_bits()).collect::<Vec<_>>()
            );
        }
    }

    #[test]
    fn top_term_matches_exhaustive_scan() {
        let idx = index();
        // "pizza" retrieves only app0; exhaustively score every vocabulary term
        let feedback = [AppId(0)];
        let mut best: Option<(f64, TermId)> = None;
        for term in 0..idx.vocab().len() as TermId {
            let tf_x: f64 = feedback.iter().map(|&a| f64::from(idx.tf(term, a))).sum();
            let p_n = idx.vocab().cf(term) as f64 / idx.n_docs() as f64;
            let w = bo1_weight(tf_x, p_n);
            if best.is_none_or(|(bw, bt)| w > bw || (w == bw && term < bt)) {
                best = Some((w, term));
            }
        }
        let (_, top) = best.unwrap();
        assert_eq!(idx.vocab().term(top), "pizza");
        let weights = bo1_term_weights(&idx, &feedback);
        assert_eq!(weights[0].0, top);

        let expanded = bo1_expand(&idx, &["pizza"], Bm25Params::default(), Bo1Params::default());
        let pizza = idx.vocab().id("pizza").unwrap();
        // re-selected original term: 1 + 0.4 * w/max = 1.4
        let w = expanded.iter().find(|e| e.0 == pizza).unwrap().1;
        assert!((w - 1.4).abs() < 1e-12);
        assert_eq!(expanded.len(), 4);
    }
}
