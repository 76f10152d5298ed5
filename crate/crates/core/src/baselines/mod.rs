//! Comparison rankers built on per-app query documents and query neighbours.

mod bm25;
mod bo1;
mod features;
mod index;
mod knn;
mod lambdamart;
mod model_file;
mod query_lm;
mod static_ranker;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::corpus::{AppCatalog, Dataset};
use crate::ranking::Popularity;
use crate::text::Tokenizer;

pub use bm25::{bm25_idf, bm25_term_score, score_bm25, score_bm25_weighted, Bm25Params, Bm25Ranker};
pub use bo1::{bo1_expand, bo1_term_weights, bo1_weight, Bo1Params};
pub use features::{write_feature_csv, FeatureExtractor, QueryFeatures, FEATURE_NAMES};
pub use index::{AppDocument, InvertedIndex};
pub use knn::{KnnRanker, KnnRepr};
pub use lambdamart::{
    lambdamart_train, LambdaMartModel, LambdaMartParams, LambdaMartRanker, RegressionTree,
};
pub use model_file::{load_baseline, read_baseline, save_baseline, write_baseline, BaselineModel};
pub use query_lm::{score_query_lm, QueryLmRanker};
pub use static_ranker::StaticRanker;

/// State every baseline carries: the catalog, the training popularity used
/// to order ties (and apps the model knows nothing about), and the tokenizer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankContext {
    pub catalog: Arc<AppCatalog>,
    pub popularity: Popularity,
    pub tokenizer: Tokenizer,
}

impl RankContext {
    pub fn from_train(train: &Dataset, tokenizer: &Tokenizer) -> Self {
        RankContext {
            catalog: train.catalog(),
            popularity: Popularity::from_dataset(train),
            tokenizer: tokenizer.clone(),
        }
    }
}
