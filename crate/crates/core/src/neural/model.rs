use std::sync::Arc;

use ndarray::{Array1, Array2, ArrayView1};

use super::grad::DropoutMask;
use super::{Dims, Head, ModelKind, Params};
use crate::corpus::AppCatalog;
use crate::ranking::{Popularity, RankedList, Ranker};
use crate::text::{Tokenizer, Vocabulary};
use crate::{Error, Result};

/// Numerically stable softmax.
pub fn term_weights(raw: &[f64]) -> Vec<f64> {
    let max = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = raw.iter().map(|v| (v - max).exp()).collect();
    let total: f64 = exp.iter().sum();
    exp.into_iter().map(|v| v / total).collect()
}

/// A query's term ids, their softmax weights and the mixed embedding.
#[derive(Clone, Debug, PartialEq)]
pub struct QueryRep {
    pub ids: Vec<usize>,
    pub alpha: Vec<f64>,
    pub q: Array1<f64>,
}

/// `sum_i softmax(W[t_i]) * E[t_i]` over the query's in-vocabulary tokens
/// (repeats counted per occurrence); `None` when there are none.
pub fn query_representation(params: &Params, ids: &[usize]) -> Option<QueryRep> {
    if ids.is_empty() {
        return None;
    }
    let raw: Vec<f64> = ids.iter().map(|&t| params.w[t]).collect();
    let alpha = term_weights(&raw);
    let mut q = Array1::zeros(params.e.ncols());
    for (&t, &a) in ids.iter().zip(&alpha) {
        q.scaled_add(a, &params.e.row(t));
    }
    Some(QueryRep {
        ids: ids.to_vec(),
        alpha,
        q,
    })
}

/// Activations of one pass through the feed-forward network.
pub(crate) struct Pass {
    pub x: Array1<f64>,
    pub h1_pre: Array1<f64>,
    pub h1: Array1<f64>,
    pub h2_pre: Array1<f64>,
    pub h2: Array1<f64>,
    /// Output after the head (score, tanh score or probabilities).
    pub out: Array1<f64>,
}

fn relu_masked(pre: &Array1<f64>, mask: Option<&Array1<f64>>) -> Array1<f64> {
    let mut h = pre.mapv(|v| v.max(0.0));
    if let Some(m) = mask {
        h *= m;
    }
    h
}

pub(crate) fn mlp(params: &Params, head: Head, x: Array1<f64>, mask: Option<&DropoutMask>) -> Pass {
    let h1_pre = params.w1.dot(&x) + &params.b1;
    let h1 = relu_masked(&h1_pre, mask.map(|m| &m.m1));
    let h2_pre = params.w2.dot(&h1) + &params.b2;
    let h2 = relu_masked(&h2_pre, mask.map(|m| &m.m2));
    let logits = params.w3.dot(&h2) + &params.b3;
    let out = match head {
        Head::Linear => logits,
        Head::Tanh => logits.mapv(f64::tanh),
        Head::Softmax => Array1::from(term_weights(logits.as_slice().expect("contiguous"))),
    };
    Pass {
        x,
        h1_pre,
        h1,
        h2_pre,
        h2,
        out,
    }
}

pub(crate) fn pair_input(q: &Array1<f64>, app_row: ArrayView1<f64>) -> Array1<f64> {
    q * &app_row
}

/// Pair score `psi(q ⊙ A[app])`.
pub fn forward_scorer(
    params: &Params,
    head: Head,
    q: &Array1<f64>,
    app: usize,
    mask: Option<&DropoutMask>,
) -> f64 {
    mlp(params, head, pair_input(q, params.a.row(app)), mask).out[0]
}

/// Classifier probabilities over the catalog.
pub fn ntas2_forward(params: &Params, q: &Array1<f64>, mask: Option<&DropoutMask>) -> Array1<f64> {
    mlp(params, Head::Softmax, q.clone(), mask).out
}

/// A trained network with everything needed to rank raw query text.
#[derive(Clone, Debug, PartialEq)]
pub struct NeuralModel {
    kind: ModelKind,
    params: Params,
    vocab: Vocabulary,
    catalog: Arc<AppCatalog>,
    popularity: Popularity,
    tokenizer: Tokenizer,
    name_ranks: Vec<usize>,
    seed: u64,
    dropout: f64,
}

impl NeuralModel {
    pub fn new(
        kind: ModelKind,
        params: Params,
        vocab: &Vocabulary,
        catalog: Arc<AppCatalog>,
        popularity: Popularity,
        seed: u64,
        dropout: f64,
    ) -> Result<Self> {
        let dims = params.dims(kind);
        if dims.vocab != vocab.len() || dims.apps != catalog.len() || popularity.counts().len() != catalog.len() {
            return Err(Error::ModelFormat(format!(
                "parameter shapes (V={}, N={}) do not match vocabulary ({}) and catalog ({})",
                dims.vocab,
                dims.apps,
                vocab.len(),
                catalog.len()
            )));
        }
        if kind.scores_pairs() && params.w3.nrows() != 1 || !kind.scores_pairs() && params.a.nrows() != 0 {
            return Err(Error::ModelFormat(format!("parameter shapes do not fit {kind}")));
        }
        // keep only the term list so a model rebuilt from a checkpoint compares equal
        let vocab = Vocabulary::build(std::iter::once(vocab.terms().iter()));
        Ok(NeuralModel {
            kind,
            params,
            vocab,
            name_ranks: catalog.name_ranks(),
            catalog,
            popularity,
            tokenizer: Tokenizer::default(),
            seed,
            dropout,
        })
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn params(&self) -> &Params {
        &self.params
    }

    pub fn dims(&self) -> Dims {
        self.params.dims(self.kind)
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn popularity(&self) -> &Popularity {
        &self.popularity
    }

    pub fn catalog_arc(&self) -> Arc<AppCatalog> {
        Arc::clone(&self.catalog)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn dropout(&self) -> f64 {
        self.dropout
    }

    pub fn token_ids(&self, text: &str) -> Vec<usize> {
        let tokens = self.tokenizer.tokenize(text);
        self.vocab.ids_of(&tokens).into_iter().map(|t| t as usize).collect()
    }

    /// Inference scores for every app; `None` when no token is in the vocabulary.
    pub fn scores_for_ids(&self, ids: &[usize]) -> Option<Vec<f64>> {
        let rep = query_representation(&self.params, ids)?;
        Some(match self.kind.head() {
            Head::Softmax => ntas2_forward(&self.params, &rep.q, None).to_vec(),
            head => (0..self.catalog.len())
                .map(|a| forward_scorer(&self.params, head, &rep.q, a, None))
                .collect(),
        })
    }

    pub fn scores(&self, text: &str) -> Option<Vec<f64>> {
        self.scores_for_ids(&self.token_ids(text))
    }

    /// Rank by model score, ties by app name; all-OOV queries get the
    /// training popularity order.
    pub fn rank_ids(&self, query_id: &str, ids: &[usize]) -> RankedList {
        match self.scores_for_ids(ids) {
            Some(scores) => RankedList::from_scores(query_id, &scores, &self.name_ranks),
            None => {
                let counts: Vec<f64> = self.popularity.counts().iter().map(|&c| c as f64).collect();
                RankedList::from_scores(query_id, &counts, self.popularity.positions())
            }
        }
    }

    /// One vector per app: the learned app embeddings for the pair scorers,
    /// the output-layer weight rows for the classifier.
    pub fn app_vectors(&self) -> Array2<f64> {
        if self.kind.scores_pairs() {
            self.params.a.clone()
        } else {
            self.params.w3.clone()
        }
    }
}

impl Ranker for NeuralModel {
    fn name(&self) -> &str {
        self.kind.label()
    }

    fn catalog(&self) -> &AppCatalog {
        &self.catalog
    }

    fn rank(&self, query_id: &str, text: &str) -> RankedList {
        self.rank_ids(query_id, &self.token_ids(text))
    }
}

#[cfg(test)]
mod tests {
    use ndarray::array;

    use super::*;
    use crate::corpus::AppId;

    fn tiny() -> Params {
        // V=2, d=2, N=2, hidden (2, 2)
        Params {
            e: array![[1.0, 2.0], [3.0, -1.0]],
            w: array![(2f64).ln(), 0.0],
            a: array![[0.5, 1.0], [-1.0, 0.25]],
            w1: array![[0.1, 0.2], [-0.3, 0.4]],
            b1: array![0.05, 0.0],
            w2: array![[0.5, -0.5], [0.25, 1.0]],
            b2: array![0.0, 0.1],
            w3: array![[1.0, -2.0]],
            b3: array![0.3],
        }
    }

    #[test]
    fn softmax_weights_two_to_one() {
        let rep = query_representation(&tiny(), &[0, 1]).unwrap();
        assert!((rep.alpha[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((rep.alpha[1] - 1.0 / 3.0).abs() < 1e-15);
        // q = 2/3 (1,2) + 1/3 (3,-1) = (5/3, 1)
        assert!((rep.q[0] - 5.0 / 3.0).abs() < 1e-15);
        assert!((rep.q[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn single_token_is_its_embedding_and_shift_invariant() {
        let p = tiny();
        assert_eq!(query_representation(&p, &[1]).unwrap().q, array![3.0, -1.0]);
        let mut shifted = p.clone();
        shifted.w += 7.5;
        let a = query_representation(&p, &[0, 1, 1]).unwrap().q;
        let b = query_representation(&shifted, &[0, 1, 1]).unwrap().q;
        assert!((&a - &b).iter().all(|d| d.abs() < 1e-12));
        assert!(query_representation(&p, &[]).is_none());
    }

    #[test]
    fn pair_score_matches_hand_forward() {
        // q = (5/3, 1); x = q ⊙ A[0] = (5/6, 1)
        // h1 = relu(W1 x + b1) = relu(0.1*5/6 + 0.2 + 0.05, -0.25 + 0.4) = (1/3, 0.15)
        // h2 = relu(W2 h1 + b2) = relu(1/6 - 0.075, 1/12 + 0.15 + 0.1) = (0.091666.., 0.333..)
        // out = 0.091666.. - 2 * 0.333.. + 0.3
        let p = tiny();
        let q = query_representation(&p, &[0, 1]).unwrap().q;
        let h1 = [1.0 / 3.0, 0.15];
        let h2 = [0.5 * h1[0] - 0.5 * h1[1], 0.25 * h1[0] + h1[1] + 0.1];
        let expected = h2[0] - 2.0 * h2[1] + 0.3;
        let got = forward_scorer(&p, Head::Linear, &q, 0, None);
        assert!((got - expected).abs() < 1e-12, "{got} vs {expected}");
        let t = forward_scorer(&p, Head::Tanh, &q, 0, None);
        assert!((t - expected.tanh()).abs() < 1e-12);
    }

    #[test]
    fn zero_input_and_biases_give_zero_linear_score() {
        let mut p = tiny();
        p.e.fill(0.0);
        for b in [&mut p.b1, &mut p.b2, &mut p.b3] {
            b.fill(0.0);
        }
        let q = query_representation(&p, &[0]).unwrap().q;
        assert_eq!(forward_scorer(&p, Head::Linear, &q, 1, None), 0.0);
    }

    #[test]
    fn classifier_outputs_distribution() {
        let mut p = tiny();
        p.a = Array2::zeros((0, 2));
        p.w3 = array![[1.0, -2.0], [0.5, 0.5], [0.0, 3.0]];
        p.b3 = array![0.0, 0.1, -0.2];
        let q = query_representation(&p, &[0, 1]).unwrap().q;
        let probs = ntas2_forward(&p, &q, None);
        assert!((probs.sum() - 1.0).abs() < 1e-12);
        assert!(probs.iter().all(|&v| v > 0.0));
        // the classifier's input is q itself
        let x: [f64; 2] = [5.0 / 3.0, 1.0];
        let h1 = [
            (0.1 * x[0] + 0.2 * x[1] + 0.05).max(0.0),
            (-0.3 * x[0] + 0.4 * x[1]).max(0.0),
        ];
        let h2b = [(0.5 * h1[0] - 0.5 * h1[1]).max(0.0), (0.25 * h1[0] + h1[1] + 0.1).max(0.0)];
        let logits = [h2b[0] - 2.0 * h2b[1], 0.5 * (h2b[0] + h2b[1]) + 0.1, 3.0 * h2b[1] - 0.2];
        let z: f64 = logits.iter().map(|l| l.exp()).sum();
        for (p, l) in probs.iter().zip(logits) {
            assert!((p - l.exp() / z).abs() < 1e-12);
        }

        p.w3.fill(0.0);
        p.b3.fill(0.0);
        let uniform = ntas2_forward(&p, &q, None);
        assert!(uniform.iter().all(|&v| (v - 1.0 / 3.0).abs() < 1e-15));
    }

    fn model(kind: ModelKind, params: Params, names: &[&str], counts: Vec<usize>) -> NeuralModel {
        let vocab = Vocabulary::build(std::iter::once(["sam".to_string(), "email".to_string()].iter()));
        let catalog = Arc::new(AppCatalog::from_names(names));
        let popularity = Popularity::from_counts(counts, &catalog);
        NeuralModel::new(kind, params, &vocab, catalog, popularity, 0, 0.0).unwrap()
    }

    #[test]
    fn ranking_is_brute_force_sort_and_oov_falls_back() {
        let m = model(ModelKind::Ntas1Pointwise, tiny(), &["b", "a"], vec![1, 3]);
        let list = m.rank("q", "sam email");
        let s0 = forward_scorer(m.params(), Head::Linear, &query_representation(m.params(), &[0, 1]).unwrap().q, 0, None);
        let s1 = forward_scorer(m.params(), Head::Linear, &query_representation(m.params(), &[0, 1]).unwrap().q, 1, None);
        let first = if s0 >= s1 { AppId(0) } else { AppId(1) };
        assert_eq!(list.entries[0].0, first);
        assert!(list.is_total_over(2));
        let fallback = m.rank("q", "unknown words");
        assert_eq!(fallback.apps().collect::<Vec<_>>(), vec![AppId(1), AppId(0)]);
    }

    #[test]
    fn permuting_catalog_and_app_rows_keeps_named_ranking() {
        let p = tiny();
        let m = model(ModelKind::Ntas1Pairwise, p.clone(), &["b", "a"], vec![2, 2]);
        let mut swapped = p;
        swapped.a = array![[-1.0, 0.25], [0.5, 1.0]];
        let m2 = model(ModelKind::Ntas1Pairwise, swapped, &["a", "b"], vec![2, 2]);
        for text in ["sam", "email sam", "email"] {
            let names = |m: &NeuralModel| -> Vec<String> {
                m.rank("q", text).apps().map(|a| m.catalog().name(a).to_string()).collect()
            };
            assert_eq!(names(&m), names(&m2));
        }
    }

    #[test]
    fn inference_is_repeatable() {
        let m = model(ModelKind::Ntas1Pointwise, tiny(), &["b", "a"], vec![1, 3]);
        assert_eq!(m.scores("sam email"), m.scores("sam email"));
        assert!(NeuralModel::new(
            ModelKind::Ntas2,
            tiny(),
            m.vocab(),
            m.catalog_arc(),
            m.popularity().clone(),
            0,
            0.0
        )
        .is_err());
    }
}
