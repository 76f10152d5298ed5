use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{evaluate, mean_metrics, QueryMetrics};
use super::report::ExperimentReport;
use crate::baselines::{
    BaselineModel, Bm25Params, Bm25Ranker, Bo1Params, KnnRanker, LambdaMartParams, LambdaMartRanker,
    QueryLmRanker, StaticRanker,
};
use crate::corpus::{split, Dataset, SplitPlan, SplitStrategy};
use crate::neural::{self, ModelKind, TrainedModel, TrainingConfig};
use crate::ranking::Ranker;
use crate::text::WordEmbeddingTable;
use crate::{seed, Error, Result};

/// Every ranking method the experiment runner knows.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Static,
    QueryLm,
    Bm25,
    Bm25Qe,
    Knn,
    KnnAwe,
    LambdaMart,
    Ntas1Pointwise,
    Ntas1Pairwise,
    Ntas2,
}

impl Method {
    pub const ALL: [Method; 10] = [
        Method::Static,
        Method::QueryLm,
        Method::Bm25,
        Method::Bm25Qe,
        Method::Knn,
        Method::KnnAwe,
        Method::LambdaMart,
        Method::Ntas1Pointwise,
        Method::Ntas1Pairwise,
        Method::Ntas2,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Method::Static => "StaticRanker",
            Method::QueryLm => "QueryLM",
            Method::Bm25 => "BM25",
            Method::Bm25Qe => "BM25-QE",
            Method::Knn => "k-NN",
            Method::KnnAwe => "k-NN-AWE",
            Method::LambdaMart => "LambdaMART",
            Method::Ntas1Pointwise => "NTAS1-pointwise",
            Method::Ntas1Pairwise => "NTAS1-pairwise",
            Method::Ntas2 => "NTAS2",
        }
    }

    pub fn neural_kind(self) -> Option<ModelKind> {
        match self {
            Method::Ntas1Pointwise => Some(ModelKind::Ntas1Pointwise),
            Method::Ntas1Pairwise => Some(ModelKind::Ntas1Pairwise),
            Method::Ntas2 => Some(ModelKind::Ntas2),
            _ => None,
        }
    }

    /// Neural methods are tested for significance against the others.
    pub fn is_proposed(self) -> bool {
        self.neural_kind().is_some()
    }

    pub fn needs_embeddings(self) -> bool {
        matches!(self, Method::KnnAwe | Method::LambdaMart)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = |v: &str| v.to_ascii_lowercase().replace(['-', '_'], "");
        let wanted = key(s);
        Method::ALL
            .into_iter()
            .find(|m| {
                key(m.label()) == wanted
                    || serde_json::to_value(m).ok().and_then(|v| v.as_str().map(key)) == Some(wanted.clone())
            })
            .ok_or_else(|| Error::InvalidConfig(format!("unknown method `{s}`")))
    }
}

/// Hyperparameters of one training run of any method.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MethodParams {
    pub mu: f64,
    pub bm25: Bm25Params,
    pub bo1: Bo1Params,
    pub knn_k: usize,
    pub lambdamart: LambdaMartParams,
    pub training: TrainingConfig,
}

impl Default for MethodParams {
    fn default() -> Self {
        MethodParams {
            mu: 2500.0,
            bm25: Bm25Params::default(),
            bo1: Bo1Params::default(),
            knn_k: 10,
            lambdamart: LambdaMartParams::default(),
            training: TrainingConfig::default(),
        }
    }
}

impl MethodParams {
    /// The parameters `method` actually uses, as `name=value` pairs.
    pub fn describe(&self, method: Method) -> String {
        let t = &self.training;
        match method {
            Method::Static => String::new(),
            Method::QueryLm => format!("mu={}", self.mu),
            Method::Bm25 => format!("k1={} b={}", self.bm25.k1, self.bm25.b),
            Method::Bm25Qe => format!(
                "k1={} b={} fb_docs={} fb_terms={}",
                self.bm25.k1, self.bm25.b, self.bo1.fb_docs, self.bo1.fb_terms
            ),
            Method::Knn | Method::KnnAwe => format!("k={}", self.knn_k),
            Method::LambdaMart => format!(
                "trees={} leaves={} shrinkage={}",
                self.lambdamart.trees, self.lambdamart.leaves, self.lambdamart.shrinkage
            ),
            Method::Ntas2 => format!("lr={} dim={}", t.learning_rate, t.embedding_dim),
            _ => format!("lr={} dim={} negatives={}", t.learning_rate, t.embedding_dim, t.negatives),
        }
    }
}

/// Candidate values per hyperparameter; every method is tuned over the
/// cross product of the ones it uses. An empty list keeps the base value.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HyperGrid {
    pub mu: Vec<f64>,
    pub k1: Vec<f64>,
    pub b: Vec<f64>,
    pub fb_docs: Vec<usize>,
    pub fb_terms: Vec<usize>,
    pub knn_k: Vec<usize>,
    pub lm_trees: Vec<usize>,
    pub lm_leaves: Vec<usize>,
    pub lm_shrinkage: Vec<f64>,
    pub learning_rate: Vec<f64>,
    pub embedding_dim: Vec<usize>,
    pub negatives: Vec<usize>,
}

fn product<T: Clone, U: Clone>(xs: &[T], ys: &[U]) -> Vec<(T, U)> {
    xs.iter()
        .flat_map(|x| ys.iter().map(move |y| (x.clone(), y.clone())))
        .collect()
}

fn or_base<T: Clone>(values: &[T], base: T) -> Vec<T> {
    if values.is_empty() {
        vec![base]
    } else {
        values.to_vec()
    }
}

impl HyperGrid {
    pub fn validate(&self) -> Result<()> {
        let positive = self.mu.iter().chain(&self.k1).chain(&self.lm_shrinkage).chain(&self.learning_rate);
        if positive.into_iter().any(|&v| !(v > 0.0 && v.is_finite())) {
            return Err(Error::InvalidConfig("mu, k1, lm_shrinkage and learning_rate must be positive".into()));
        }
        if self.b.iter().any(|&b| !(0.0..=1.0).contains(&b)) {
            return Err(Error::InvalidConfig("b must lie in [0, 1]".into()));
        }
        let counts = self.fb_docs.iter().chain(&self.knn_k).chain(&self.lm_trees).chain(&self.lm_leaves);
        if counts.chain(&self.embedding_dim).any(|&v| v == 0) {
            return Err(Error::InvalidConfig("grid counts and sizes must be at least 1".into()));
        }
        Ok(())
    }

    /// Parameter sets to try for `method`, starting from `base`.
    pub fn candidates(&self, method: Method, base: &MethodParams) -> Vec<MethodParams> {
        let with = |f: &dyn Fn(&mut MethodParams)| {
            let mut p = base.clone();
            f(&mut p);
            p
        };
        let t = &base.training;
        let lr_dim = product(
            &or_base(&self.learning_rate, t.learning_rate),
            &or_base(&self.embedding_dim, t.embedding_dim),
        );
        let k1_b = product(&or_base(&self.k1, base.bm25.k1), &or_base(&self.b, base.bm25.b));
        match method {
            Method::Static => vec![base.clone()],
            Method::QueryLm => or_base(&self.mu, base.mu).into_iter().map(|mu| with(&|p| p.mu = mu)).collect(),
            Method::Bm25 => k1_b
                .into_iter()
                .map(|(k1, b)| with(&|p| p.bm25 = Bm25Params { k1, b }))
                .collect(),
            Method::Bm25Qe => product(
                &k1_b,
                &product(&or_base(&self.fb_docs, base.bo1.fb_docs), &or_base(&self.fb_terms, base.bo1.fb_terms)),
            )
            .into_iter()
            .map(|((k1, b), (fb_docs, fb_terms))| {
                with(&|p| {
                    p.bm25 = Bm25Params { k1, b };
                    p.bo1.fb_docs = fb_docs;
                    p.bo1.fb_terms = fb_terms;
                })
            })
            .collect(),
            Method::Knn | Method::KnnAwe => {
                or_base(&self.knn_k, base.knn_k).into_iter().map(|k| with(&|p| p.knn_k = k)).collect()
            }
            Method::LambdaMart => {
                let lm = &base.lambdamart;
                product(
                    &product(&or_base(&self.lm_trees, lm.trees), &or_base(&self.lm_leaves, lm.leaves)),
                    &or_base(&self.lm_shrinkage, lm.shrinkage),
                )
                .into_iter()
                .map(|((trees, leaves), shrinkage)| {
                    with(&|p| {
                        p.lambdamart.trees = trees;
                        p.lambdamart.leaves = leaves;
                        p.lambdamart.shrinkage = shrinkage;
                    })
                })
                .collect()
            }
            Method::Ntas2 => lr_dim
                .into_iter()
                .map(|(lr, dim)| {
                    with(&|p| {
                        p.training.learning_rate = lr;
                        p.training.embedding_dim = dim;
                    })
                })
                .collect(),
            _ => product(&lr_dim, &or_base(&self.negatives, t.negatives))
                .into_iter()
                .map(|((lr, dim), negatives)| {
                    with(&|p| {
                        p.training.learning_rate = lr;
                        p.training.embedding_dim = dim;
                        p.training.negatives = negatives;
                    })
                })
                .collect(),
        }
    }
}

/// Pretrained word vectors plus the file they came from (recorded in saved models).
#[derive(Clone, Debug)]
pub struct EmbeddingSource {
    pub table: Arc<WordEmbeddingTable>,
    pub path: Option<PathBuf>,
}

/// A trained method of either family.
#[derive(Clone, Debug)]
pub enum TrainedMethod {
    Baseline(BaselineModel),
    Neural(Box<TrainedModel>),
}

impl TrainedMethod {
    pub fn ranker(&self) -> &dyn Ranker {
        match self {
            TrainedMethod::Baseline(b) => b.ranker(),
            TrainedMethod::Neural(n) => &n.model,
        }
    }
}

fn require_embeddings(method: Method, embeddings: Option<&EmbeddingSource>) -> Result<&EmbeddingSource> {
    embeddings.ok_or_else(|| {
        Error::InvalidConfig(format!("{method} needs pretrained word embeddings (none were given)"))
    })
}

/// Train one method with fixed parameters. Baselines index `train` only;
/// LambdaMART fits its trees on the features of `valid`; neural models use
/// `valid` for early stopping.
pub fn train_method(
    method: Method,
    params: &MethodParams,
    train: &Dataset,
    valid: &Dataset,
    embeddings: Option<&EmbeddingSource>,
) -> Result<TrainedMethod> {
    if train.is_empty() {
        return Err(Error::InsufficientData("empty training set".into()));
    }
    let baseline = match method {
        Method::Static => BaselineModel::Static(StaticRanker::train(train)),
        Method::QueryLm => BaselineModel::QueryLm(QueryLmRanker::train(train, params.mu)),
        Method::Bm25 => BaselineModel::Bm25(Bm25Ranker::train(train, params.bm25, None)),
        Method::Bm25Qe => BaselineModel::Bm25(Bm25Ranker::train(train, params.bm25, Some(params.bo1))),
        Method::Knn => BaselineModel::Knn(KnnRanker::train_tfidf(train, params.knn_k)),
        Method::KnnAwe => {
            let e = require_embeddings(method, embeddings)?;
            BaselineModel::Knn(KnnRanker::train_awe(train, params.knn_k, e.table.clone(), e.path.clone()))
        }
        Method::LambdaMart => {
            let e = require_embeddings(method, embeddings)?;
            if valid.is_empty() {
                return Err(Error::InsufficientData("LambdaMART needs validation queries to fit on".into()));
            }
            BaselineModel::LambdaMart(LambdaMartRanker::train(
                train,
                valid,
                params.knn_k,
                e.table.clone(),
                e.path.clone(),
                params.lambdamart,
            )?)
        }
        _ => {
            let kind = method.neural_kind().expect("remaining methods are neural");
            let valid = (!valid.is_empty()).then_some(valid);
            return Ok(TrainedMethod::Neural(Box::new(neural::train(kind, train, valid, &params.training)?)));
        }
    };
    Ok(TrainedMethod::Baseline(baseline))
}

/// Full experiment description.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentPlan {
    pub strategies: Vec<SplitStrategy>,
    pub repetitions: usize,
    pub ratios: (f64, f64, f64),
    pub seed: u64,
    pub methods: Vec<Method>,
    pub grid: HyperGrid,
    /// Starting point for every candidate; grid values override it.
    pub params: MethodParams,
    /// Family-wise significance level before Bonferroni correction.
    pub alpha: f64,
}

impl Default for ExperimentPlan {
    fn default() -> Self {
        ExperimentPlan {
            strategies: vec![SplitStrategy::ByQuery, SplitStrategy::ByTask],
            repetitions: 5,
            ratios: (0.7, 0.1, 0.2),
            seed: 0,
            methods: Method::ALL.to_vec(),
            grid: HyperGrid::default(),
            params: MethodParams::default(),
            alpha: 0.05,
        }
    }
}

impl ExperimentPlan {
    pub fn validate(&self) -> Result<()> {
        if self.strategies.is_empty() || self.methods.is_empty() {
            return Err(Error::InvalidConfig("plan needs at least one strategy and one method".into()));
        }
        if !(1..=5).contains(&self.repetitions) {
            return Err(Error::InvalidConfig("repetitions must be between 1 and 5".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidConfig("alpha must lie in (0, 1)".into()));
        }
        self.grid.validate()?;
        for (i, m) in self.methods.iter().enumerate() {
            if self.methods[..i].contains(m) {
                return Err(Error::InvalidConfig(format!("method {m} listed twice")));
            }
        }
        Ok(())
    }

    pub fn split_plan(&self, strategy: SplitStrategy, repetition: usize) -> SplitPlan {
        SplitPlan {
            ratios: self.ratios,
            ..SplitPlan::new(strategy, self.seed, repetition as u32)
        }
    }

    /// Training seed of a neural method in one repetition.
    pub fn training_seed(&self, method: Method, repetition: usize) -> u64 {
        seed::derive_indexed(self.seed, &format!("train/{}", method.label()), repetition as u64)
    }
}

/// Outcome of one (strategy, repetition, method) cell.
#[derive(Clone, Debug, PartialEq)]
pub struct CellResult {
    pub strategy: SplitStrategy,
    pub repetition: usize,
    pub method: Method,
    pub outcome: std::result::Result<CellSuccess, String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CellSuccess {
    pub chosen: String,
    pub valid_mrr: f64,
    pub per_query: Vec<QueryMetrics>,
}

fn mean_mrr(ranker: &dyn Ranker, data: &Dataset) -> Result<f64> {
    Ok(mean_metrics(&evaluate(ranker, data)?)[0])
}

/// Pick the candidate with the best validation MRR (earliest wins ties).
fn tune(
    method: Method,
    candidates: &[MethodParams],
    train: &Dataset,
    valid: &Dataset,
    embeddings: Option<&EmbeddingSource>,
) -> Result<(MethodParams, TrainedMethod, f64)> {
    if method == Method::LambdaMart && candidates.len() > 1 {
        // the trees are fit on validation queries, so select on held-out halves
        let half = valid.len() / 2;
        if half == 0 {
            return Err(Error::InsufficientData("too few validation queries to tune LambdaMART".into()));
        }
        let fit = valid.subset(valid.records()[..half].to_vec());
        let check = valid.subset(valid.records()[half..].to_vec());
        let mut best: Option<(usize, f64)> = None;
        for (i, c) in candidates.iter().enumerate() {
            let model = train_method(method, c, train, &fit, embeddings)?;
            let score = mean_mrr(model.ranker(), &check)?;
            if best.is_none_or(|(_, b)| score > b) {
                best = Some((i, score));
            }
        }
        let (i, score) = best.expect("at least one candidate");
        let model = train_method(method, &candidates[i], train, valid, embeddings)?;
        return Ok((candidates[i].clone(), model, score));
    }
    let mut best: Option<(MethodParams, TrainedMethod, f64)> = None;
    for c in candidates {
        let model = train_method(method, c, train, valid, embeddings)?;
        let score = if valid.is_empty() { 0.0 } else { mean_mrr(model.ranker(), valid)? };
        if best.as_ref().is_none_or(|b| score > b.2) {
            best = Some((c.clone(), model, score));
        }
    }
    Ok(best.expect("at least one candidate"))
}

fn run_cell(
    plan: &ExperimentPlan,
    method: Method,
    repetition: usize,
    parts: &(Dataset, Dataset, Dataset),
    embeddings: Option<&EmbeddingSource>,
) -> Result<CellSuccess> {
    let (train, valid, test) = parts;
    let mut base = plan.params.clone();
    base.training.seed = plan.training_seed(method, repetition);
    let candidates = plan.grid.candidates(method, &base);
    let (chosen, model, valid_mrr) = tune(method, &candidates, train, valid, embeddings)?;
    Ok(CellSuccess {
        chosen: chosen.describe(method),
        valid_mrr,
        per_query: evaluate(model.ranker(), test)?,
    })
}

/// Split, tune on validation and evaluate on test for every strategy,
/// repetition and method. Cells run in parallel; results come back in plan
/// order, so reports do not depend on the thread count. A failing cell is
/// recorded with its diagnostic instead of aborting the run.
pub fn run_experiment(
    dataset: &Dataset,
    plan: &ExperimentPlan,
    embeddings: Option<&EmbeddingSource>,
) -> Result<ExperimentReport> {
    plan.validate()?;
    let mut splits = Vec::new();
    for &strategy in &plan.strategies {
        for rep in 0..plan.repetitions {
            let s = split(dataset, &plan.split_plan(strategy, rep))?;
            splits.push((strategy, rep, (s.train, s.valid, s.test)));
        }
    }
    let jobs: Vec<(usize, Method)> = (0..splits.len())
        .flat_map(|i| plan.methods.iter().map(move |&m| (i, m)))
        .collect();
    let cells: Vec<CellResult> = jobs
        .par_iter()
        .map(|&(i, method)| {
            let (strategy, repetition, parts) = &splits[i];
            let outcome = run_cell(plan, method, *repetition, parts, embeddings).map_err(|e| e.to_string());
            if let Err(msg) = &outcome {
                log::warn!("{method} on {} repetition {repetition} failed: {msg}", strategy.label());
            }
            CellResult {
                strategy: *strategy,
                repetition: *repetition,
                method,
                outcome,
            }
        })
        .collect();
    Ok(ExperimentReport::new(plan.clone(), cells))
}
