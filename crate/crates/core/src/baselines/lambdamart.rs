use std::path::PathBuf;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{FeatureExtractor, QueryFeatures, RankContext};
use crate::corpus::{AppCatalog, Dataset};
use crate::ranking::{RankedList, Ranker};
use crate::text::{Tokenizer, WordEmbeddingTable};
use crate::{Error, Result};

const CUTOFF: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LambdaMartParams {
    pub trees: usize,
    pub leaves: usize,
    pub shrinkage: f64,
    pub min_leaf: usize,
}

impl Default for LambdaMartParams {
    fn default() -> Self {
        LambdaMartParams {
            trees: 100,
            leaves: 10,
            shrinkage: 0.1,
            min_leaf: 1,
        }
    }
}

impl LambdaMartParams {
    pub fn validate(&self) -> Result<()> {
        if self.trees == 0 || self.leaves < 2 || self.min_leaf == 0 {
            return Err(Error::InvalidConfig(
                "LambdaMART needs trees >= 1, leaves >= 2, min_leaf >= 1".into(),
            ));
        }
        if !(self.shrinkage > 0.0 && self.shrinkage.is_finite()) {
            return Err(Error::InvalidConfig("LambdaMART shrinkage must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf(f64),
}

/// Binary regression tree; rows with `x[feature] <= threshold` go left.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    nodes: Vec<Node>,
}

impl RegressionTree {
    pub fn constant(value: f64) -> Self {
        RegressionTree {
            nodes: vec![Node::Leaf(value)],
        }
    }

    pub fn predict(&self, x: &[f64; 3]) -> f64 {
        let mut at = 0;
        loop {
            match self.nodes[at] {
                Node::Leaf(v) => return v,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => at = if x[feature] <= threshold { left } else { right },
            }
        }
    }

    pub fn leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf(_))).count()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LambdaMartModel {
    trees: Vec<RegressionTree>,
}

impl LambdaMartModel {
    pub fn trees(&self) -> &[RegressionTree] {
        &self.trees
    }

    pub fn predict(&self, x: &[f64; 3]) -> f64 {
        self.predict_prefix(x, self.trees.len())
    }

    /// Score using only the first `n` trees.
    pub fn predict_prefix(&self, x: &[f64; 3], n: usize) -> f64 {
        self.trees.iter().take(n).map(|t| t.predict(x)).sum()
    }
}

fn discount(rank: usize) -> f64 {
    if rank < CUTOFF {
        1.0 / ((rank + 2) as f64).log2()
    } else {
        0.0
    }
}

fn gain_value(g: u8) -> f64 {
    2f64.powi(i32::from(g)) - 1.0
}

/// nDCG@5 of `scores` against `gains`, ties broken by index.
#[cfg(test)]
fn ndcg5(scores: &[f64], gains: &[u8]) -> f64 {
    let mut ideal: Vec<u8> = gains.to_vec();
    ideal.sort_unstable_by(|a, b| b.cmp(a));
    let idcg: f64 = ideal.iter().enumerate().map(|(r, &g)| gain_value(g) * discount(r)).sum();
    if idcg == 0.0 {
        return 0.0;
    }
    let order = sorted_order(scores);
    let dcg: f64 = order.iter().enumerate().map(|(r, &i)| gain_value(gains[i]) * discount(r)).sum();
    dcg / idcg
}

fn sorted_order(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order
}

/// Accumulate λ-gradients and second-order weights for one query.
fn query_lambdas(scores: &[f64], gains: &[u8], lambdas: &mut [f64], weights: &mut [f64]) {
    let mut ideal: Vec<u8> = gains.to_vec();
    ideal.sort_unstable_by(|a, b| b.cmp(a));
    let idcg: f64 = ideal.iter().enumerate().map(|(r, &g)| gain_value(g) * discount(r)).sum();
    if idcg == 0.0 {
        return;
    }
    let mut rank = vec![0; scores.len()];
    for (r, i) in sorted_order(scores).into_iter().enumerate() {
        rank[i] = r;
    }
    for i in 0..scores.len() {
        for j in 0..scores.len() {
            if gains[i] <= gains[j] {
                continue;
            }
            let delta = ((gain_value(gains[i]) - gain_value(gains[j]))
                * (discount(rank[i]) - discount(rank[j])))
            .abs()
                / idcg;
            if delta == 0.0 {
                continue;
            }
            let rho = 1.0 / (1.0 + (scores[i] - scores[j]).exp());
            lambdas[i] += delta * rho;
            lambdas[j] -= delta * rho;
            let w = delta * rho * (1.0 - rho);
            weights[i] += w;
            weights[j] += w;
        }
    }
}

struct Leaf {
    node: usize,
    rows: Vec<usize>,
    best: Option<(f64, usize, f64)>,
}

fn best_split(rows: &[usize], x: &[[f64; 3]], target: &[f64], min_leaf: usize) -> Option<(f64, usize, f64)> {
    let n = rows.len();
    if n < 2 * min_leaf {
        return None;
    }
    let total: f64 = rows.iter().map(|&r| target[r]).sum();
    let base = total * total / n as f64;
    let mut best: Option<(f64, usize, f64)> = None;
    for f in 0..3 {
        let mut sorted = rows.to_vec();
        sorted.sort_by(|&a, &b| x[a][f].total_cmp(&x[b][f]).then(a.cmp(&b)));
        let mut left = 0.0;
        for k in 0..n - 1 {
            left += target[sorted[k]];
            let (lo, hi) = (x[sorted[k]][f], x[sorted[k + 1]][f]);
            let n_left = k + 1;
            if lo == hi || n_left < min_leaf || n - n_left < min_leaf {
                continue;
            }
            let right = total - left;
            let gain = left * left / n_left as f64 + right * right / (n - n_left) as f64 - base;
            if gain > 1e-12 && best.is_none_or(|b| gain > b.0) {
                best = Some((gain, f, lo + (hi - lo) / 2.0));
            }
        }
    }
    best
}

/// Least-squares tree on `target` grown best-first to `max_leaves`, with
/// Newton leaf values `sum(lambda) / sum(weight)` scaled by `shrinkage`.
fn fit_tree(
    x: &[[f64; 3]],
    lambdas: &[f64],
    weights: &[f64],
    params: &LambdaMartParams,
) -> RegressionTree {
    let all: Vec<usize> = (0..x.len()).collect();
    let mut nodes = vec![Node::Leaf(0.0)];
    let mut leaves = vec![Leaf {
        node: 0,
        best: best_split(&all, x, lambdas, params.min_leaf),
        rows: all,
    }];
    while leaves.len() < params.leaves {
        let pick = leaves
            .iter()
            .enumerate()
            .filter_map(|(i, l)| l.best.map(|b| (i, b.0)))
            .fold(None, |acc: Option<(usize, f64)>, (i, g)| match acc {
                Some((_, bg)) if bg >= g => acc,
                _ => Some((i, g)),
            });
        let Some((i, _)) = pick else { break };
        let leaf = leaves.swap_remove(i);
        let (_, feature, threshold) = leaf.best.expect("picked leaves have a split");
        let (l_rows, r_rows): (Vec<usize>, Vec<usize>) =
            leaf.rows.iter().partition(|&&r| x[r][feature] <= threshold);
        let (left, right) = (nodes.len(), nodes.len() + 1);
        nodes.push(Node::Leaf(0.0));
        nodes.push(Node::Leaf(0.0));
        nodes[leaf.node] = Node::Split {
            feature,
            threshold,
            left,
            right,
        };
        for (node, rows) in [(left, l_rows), (right, r_rows)] {
            leaves.push(Leaf {
                node,
                best: best_split(&rows, x, lambdas, params.min_leaf),
                rows,
            });
        }
        // keep leaf order stable so ties pick the earliest-created leaf
        leaves.sort_by_key(|l| l.node);
    }
    for leaf in &leaves {
        let num: f64 = leaf.rows.iter().map(|&r| lambdas[r]).sum();
        let den: f64 = leaf.rows.iter().map(|&r| weights[r]).sum();
        let value = if den > 0.0 { params.shrinkage * num / den } else { 0.0 };
        nodes[leaf.node] = Node::Leaf(value);
    }
    RegressionTree { nodes }
}

/// Boosted trees on λ-gradients of nDCG@5. Fully deterministic.
pub fn lambdamart_train(queries: &[QueryFeatures], params: LambdaMartParams) -> Result<LambdaMartModel> {
    params.validate()?;
    if queries.is_empty() {
        return Err(Error::InsufficientData("LambdaMART needs at least one query".into()));
    }
    let x: Vec<[f64; 3]> = queries.iter().flat_map(|q| q.rows.iter().copied()).collect();
    let mut offsets = Vec::with_capacity(queries.len() + 1);
    offsets.push(0);
    for q in queries {
        if q.rows.len() != q.gains.len() {
            return Err(Error::LengthMismatch {
                left: q.rows.len(),
                right: q.gains.len(),
            });
        }
        offsets.push(offsets.last().unwrap() + q.rows.len());
    }
    let mut scores = vec![0.0; x.len()];
    let mut trees = Vec::with_capacity(params.trees);
    for _ in 0..params.trees {
        let mut lambdas = vec![0.0; x.len()];
        let mut weights = vec![0.0; x.len()];
        for (q, w) in queries.iter().zip(offsets.windows(2)) {
            let (lo, hi) = (w[0], w[1]);
            query_lambdas(&scores[lo..hi], &q.gains, &mut lambdas[lo..hi], &mut weights[lo..hi]);
        }
        let tree = if lambdas.iter().all(|&l| l == 0.0) {
            RegressionTree::constant(0.0)
        } else {
            fit_tree(&x, &lambdas, &weights, &params)
        };
        for (s, row) in scores.iter_mut().zip(&x) {
            *s += tree.predict(row);
        }
        trees.push(tree);
    }
    Ok(LambdaMartModel { trees })
}

/// LambdaMART over BM25 / k-NN / k-NN-AWE scores.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LambdaMartRanker {
    ctx: RankContext,
    features: FeatureExtractor,
    model: LambdaMartModel,
}

impl LambdaMartRanker {
    /// Fit the feature baselines on `train` and the trees on the features of
    /// `fit` (held-out queries, so the features carry no self-matches).
    pub fn train(
        train: &Dataset,
        fit: &Dataset,
        knn_k: usize,
        table: Arc<WordEmbeddingTable>,
        embeddings_path: Option<PathBuf>,
        params: LambdaMartParams,
    ) -> Result<Self> {
        let features = FeatureExtractor::train(train, knn_k, table, embeddings_path);
        let model = lambdamart_train(&features.dataset_features(fit)?, params)?;
        Ok(LambdaMartRanker {
            ctx: RankContext::from_train(train, &Tokenizer::default()),
            features,
            model,
        })
    }

    pub fn from_parts(ctx: RankContext, features: FeatureExtractor, model: LambdaMartModel) -> Self {
        LambdaMartRanker { ctx, features, model }
    }

    pub fn features(&self) -> &FeatureExtractor {
        &self.features
    }

    pub(crate) fn features_mut(&mut self) -> &mut FeatureExtractor {
        &mut self.features
    }

    pub fn model(&self) -> &LambdaMartModel {
        &self.model
    }

    pub fn scores(&self, text: &str) -> Result<Vec<f64>> {
        Ok(self.features.rows(text)?.iter().map(|r| self.model.predict(r)).collect())
    }
}

impl Ranker for LambdaMartRanker {
    fn name(&self) -> &str {
        "LambdaMART"
    }

    fn catalog(&self) -> &AppCatalog {
        &self.ctx.catalog
    }

    fn rank(&self, query_id: &str, text: &str) -> RankedList {
        let scores = self
            .scores(text)
            .unwrap_or_else(|_| vec![0.0; self.ctx.catalog.len()]);
        RankedList::from_scores(query_id, &scores, self.ctx.popularity.positions())
    }
}
