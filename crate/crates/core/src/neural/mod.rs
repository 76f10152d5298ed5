//! Neural target-app rankers.
//!
//! Both models share one query encoder: a softmax over learned per-term
//! weights mixes the query's term embeddings into a single vector. The
//! pair scorer (pointwise or pairwise) feeds the element-wise product of
//! that vector and an app embedding through a two-hidden-layer network; the
//! classifier maps the query vector straight to a distribution over apps.
//!
//! Gradients are written out by hand in double precision and checked
//! against finite differences in the tests.

mod checkpoint;
mod grad;
mod loss;
mod model;
mod optim;
mod params;
mod train;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::Error;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CHECKPOINT_MAGIC};
pub use grad::{batch_loss, compute_gradients, DropoutMask};
pub use loss::{loss_cross_entropy, loss_hinge, loss_mse, PROBABILITY_FLOOR};
pub use model::{forward_scorer, ntas2_forward, query_representation, term_weights, NeuralModel, QueryRep};
pub use optim::{Optimizer, OptimizerKind};
pub use params::{Dims, Params};
pub use train::{
    build_instances, sample_negatives, train, EpochRecord, History, Instance, TargetDistribution,
    TrainedModel, TrainingConfig,
};

/// Which network and loss.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Ntas1Pointwise,
    Ntas1Pairwise,
    Ntas2,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [
        ModelKind::Ntas1Pointwise,
        ModelKind::Ntas1Pairwise,
        ModelKind::Ntas2,
    ];

    pub fn head(self) -> Head {
        match self {
            ModelKind::Ntas1Pointwise => Head::Linear,
            ModelKind::Ntas1Pairwise => Head::Tanh,
            ModelKind::Ntas2 => Head::Softmax,
        }
    }

    /// True for the query-app pair scorers, which carry app embeddings.
    pub fn scores_pairs(self) -> bool {
        self != ModelKind::Ntas2
    }

    pub fn label(self) -> &'static str {
        match self {
            ModelKind::Ntas1Pointwise => "NTAS1-pointwise",
            ModelKind::Ntas1Pairwise => "NTAS1-pairwise",
            ModelKind::Ntas2 => "NTAS2",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "ntas1-pointwise" => Ok(ModelKind::Ntas1Pointwise),
            "ntas1-pairwise" => Ok(ModelKind::Ntas1Pairwise),
            "ntas2" => Ok(ModelKind::Ntas2),
            _ => Err(Error::InvalidConfig(format!("unknown neural model `{s}`"))),
        }
    }
}

/// Output layer of the feed-forward network.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Head {
    Linear,
    Tanh,
    Softmax,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kinds_parse_from_labels() {
        for kind in ModelKind::ALL {
            assert_eq!(kind.label().parse::<ModelKind>().unwrap(), kind);
        }
        assert_eq!("ntas1_pairwise".parse::<ModelKind>().unwrap(), ModelKind::Ntas1Pairwise);
        assert!("ntas3".parse::<ModelKind>().is_err());
    }
}
