use serde::{Deserialize, Serialize};

use super::RankContext;
use crate::corpus::{AppCatalog, Dataset};
use crate::ranking::{RankedList, Ranker};
use crate::text::Tokenizer;

/// Query-independent ranking by training-set popularity.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StaticRanker {
    ctx: RankContext,
}

impl StaticRanker {
    pub fn train(train: &Dataset) -> Self {
        StaticRanker {
            ctx: RankContext::from_train(train, &Tokenizer::default()),
        }
    }

    pub fn scores(&self) -> Vec<f64> {
        self.ctx.popularity.counts().iter().map(|&c| c as f64).collect()
    }
}

impl Ranker for StaticRanker {
    fn name(&self) -> &str {
        "StaticRanker"
    }

    fn catalog(&self) -> &AppCatalog {
        &self.ctx.catalog
    }

    fn rank(&self, query_id: &str, _text: &str) -> RankedList {
        RankedList::from_scores(query_id, &self.scores(), self.ctx.popularity.positions())
    }
}
