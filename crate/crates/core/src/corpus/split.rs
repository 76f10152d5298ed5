use std::collections::{BTreeMap, HashMap};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::{seed, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitStrategy {
    /// Shuffle individual queries.
    ByQuery,
    /// Shuffle whole tasks; no task appears in two partitions.
    ByTask,
}

impl SplitStrategy {
    pub fn label(self) -> &'static str {
        match self {
            SplitStrategy::ByQuery => "by_query",
            SplitStrategy::ByTask => "by_task",
        }
    }
}

impl std::str::FromStr for SplitStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "query" | "by_query" => Ok(SplitStrategy::ByQuery),
            "task" | "by_task" => Ok(SplitStrategy::ByTask),
            other => Err(Error::InvalidConfig(format!("unknown split strategy `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub strategy: SplitStrategy,
    /// (train, valid, test) fractions.
    pub ratios: (f64, f64, f64),
    pub seed: u64,
    /// Repetition index in `[0, 5)`, folded into the shuffle seed.
    pub repetition: u32,
}

impl SplitPlan {
    pub fn new(strategy: SplitStrategy, seed: u64, repetition: u32) -> Self {
        SplitPlan {
            strategy,
            ratios: (0.7, 0.1, 0.2),
            seed,
            repetition,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (a, b, c) = self.ratios;
        if !(a > 0.0 && b > 0.0 && c > 0.0) {
            return Err(Error::InvalidConfig("split ratios must be positive".into()));
        }
        if (a + b + c - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidConfig(format!(
                "split ratios sum to {}, not 1",
                a + b + c
            )));
        }
        if self.repetition >= 5 {
            return Err(Error::InvalidConfig(format!(
                "repetition {} outside [0, 5)",
                self.repetition
            )));
        }
        Ok(())
    }

    fn shuffle_seed(&self) -> u64 {
        seed::derive_indexed(self.seed, "split", u64::from(self.repetition))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Split {
    pub train: Dataset,
    pub valid: Dataset,
    pub test: Dataset,
}

/// `floor(ratio * n)`, tolerant of representation error in `ratio`.
pub(crate) fn floor_share(ratio: f64, n: usize) -> usize {
    (ratio * n as f64 + 1e-9).floor() as usize
}

/// Partition a dataset into train/valid/test.
///
/// By query, the first two partitions get `floor(ratio * n)` records and the
/// test set takes the remainder. By task, tasks are shuffled and assigned
/// whole; a partition closes at the task whose cumulative query count first
/// reaches its ratio boundary. Records keep their original relative order.
pub fn split(dataset: &Dataset, plan: &SplitPlan) -> Result<Split> {
    plan.validate()?;
    let n = dataset.len();
    if n < 3 {
        return Err(Error::InsufficientData(format!(
            "{n} records cannot fill three partitions"
        )));
    }
    let mut rng = seed::rng(plan.shuffle_seed());
    let mut assignment = vec![0u8; n];

    match plan.strategy {
        SplitStrategy::ByQuery => {
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut rng);
            let n_train = floor_share(plan.ratios.0, n);
            let n_valid = floor_share(plan.ratios.1, n);
            for (pos, &idx) in order.iter().enumerate() {
                assignment[idx] = if pos < n_train {
                    0
                } else if pos < n_train + n_valid {
                    1
                } else {
                    2
                };
            }
        }
        SplitStrategy::ByTask => {
            let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
            for record in dataset.records() {
                *counts.entry(record.task_id.as_str()).or_default() += 1;
            }
            if counts.len() < 3 {
                return Err(Error::InsufficientData(format!(
                    "{} tasks cannot fill three partitions",
                    counts.len()
                )));
            }
            let mut tasks: Vec<&str> = counts.keys().copied().collect();
            tasks.shuffle(&mut rng);

            let train_boundary = plan.ratios.0 * n as f64;
            let valid_boundary = (plan.ratios.0 + plan.ratios.1) * n as f64;
            let mut part_of: HashMap<&str, u8> = HashMap::with_capacity(tasks.len());
            let mut part = 0u8;
            let mut cumulative = 0usize;
            for (i, task) in tasks.iter().enumerate() {
                part_of.insert(task, part);
                cumulative += counts[task];
                let remaining = tasks.len() - i - 1;
                let reached = |boundary: f64| cumulative as f64 >= boundary - 1e-9;
                match part {
                    0 if reached(train_boundary) || remaining == 2 => part = 1,
                    1 if reached(valid_boundary) || remaining == 1 => part = 2,
                    _ => {}
                }
            }
            for (idx, record) in dataset.records().iter().enumerate() {
                assignment[idx] = part_of[record.task_id.as_str()];
            }
        }
    }

    let mut parts = [Vec::new(), Vec::new(), Vec::new()];
    for (record, &part) in dataset.records().iter().zip(&assignment) {
        parts[part as usize].push(record.clone());
    }
    if parts.iter().any(Vec::is_empty) {
        return Err(Error::InsufficientData(format!(
            "split of {n} records left a partition empty"
        )));
    }
    let [train, valid, test] = parts;
    Ok(Split {
        train: dataset.subset(train),
        valid: dataset.subset(valid),
        test: dataset.subset(test),
    })
}
