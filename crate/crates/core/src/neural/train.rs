use std::io::Write;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::grad::{compute_gradients, DropoutMask};
use super::{Dims, ModelKind, NeuralModel, Optimizer, OptimizerKind, Params};
use crate::corpus::{AppCatalog, AppId, Dataset, QueryRecord};
use crate::eval::{mrr, Qrels};
use crate::ranking::Popularity;
use crate::text::{Tokenizer, Vocabulary};
use crate::{seed, Error, Result};

/// Target distribution for the classifier.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetDistribution {
    /// Relevance gains (2 for the first app, 1 for the others) normalized.
    #[default]
    Gain,
    /// Equal mass on every target app.
    Uniform,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub dropout: f64,
    pub margin: f64,
    pub negatives: usize,
    pub optimizer: OptimizerKind,
    /// Epochs without a validation improvement before stopping; 0 disables.
    pub patience: usize,
    pub embedding_dim: usize,
    pub hidden: (usize, usize),
    pub target: TargetDistribution,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            learning_rate: 0.001,
            batch_size: 32,
            epochs: 30,
            seed: 0,
            dropout: 0.2,
            margin: 1.0,
            negatives: 2,
            optimizer: OptimizerKind::Adam,
            patience: 5,
            embedding_dim: 64,
            hidden: (128, 64),
            target: TargetDistribution::Gain,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::InvalidConfig(format!("training config: {m}")));
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return fail("learning_rate must be finite and non-negative");
        }
        if self.batch_size == 0 || self.epochs == 0 || self.negatives == 0 {
            return fail("batch_size, epochs and negatives must be at least 1");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return fail("dropout must lie in [0, 1)");
        }
        if !(self.margin > 0.0 && self.margin.is_finite()) {
            return fail("margin must be positive");
        }
        if self.embedding_dim == 0 || self.hidden.0 == 0 || self.hidden.1 == 0 {
            return fail("layer sizes must be positive");
        }
        Ok(())
    }
}

/// One training example. `ids` are the query's in-vocabulary term ids.
#[derive(Clone, Debug, PartialEq)]
pub enum Instance {
    Pointwise { ids: Vec<usize>, app: usize, label: f64 },
    Pairwise { ids: Vec<usize>, positive: usize, negative: usize },
    Classification { ids: Vec<usize>, target: Vec<f64> },
}

impl Instance {
    pub fn ids(&self) -> &[usize] {
        match self {
            Instance::Pointwise { ids, .. }
            | Instance::Pairwise { ids, .. }
            | Instance::Classification { ids, .. } => ids,
        }
    }

    /// Forward passes needed to evaluate the instance.
    pub fn passes(&self) -> usize {
        match self {
            Instance::Pairwise { .. } => 2,
            _ => 1,
        }
    }
}

/// Uniform sample without replacement from the apps the record does not target.
pub fn sample_negatives(
    record: &QueryRecord,
    catalog: &AppCatalog,
    count: usize,
    seed_value: u64,
) -> Result<Vec<AppId>> {
    let available: Vec<AppId> = catalog
        .ids()
        .filter(|a| !record.target_apps.contains(a))
        .collect();
    if count > available.len() {
        return Err(Error::InsufficientData(format!(
            "query `{}`: {count} negatives requested, {} non-target apps available",
            record.query_id,
            available.len()
        )));
    }
    let mut rng = seed::rng(seed_value);
    Ok(rand::seq::index::sample(&mut rng, available.len(), count)
        .into_iter()
        .map(|i| available[i])
        .collect())
}

/// Instances for one epoch. Negatives are drawn per record from
/// `seed_value`, `negatives` per target app (capped by availability).
pub fn build_instances(
    kind: ModelKind,
    records: &[(Vec<usize>, &QueryRecord)],
    catalog: &AppCatalog,
    negatives: usize,
    target: TargetDistribution,
    seed_value: u64,
) -> Result<Vec<Instance>> {
    let mut out = Vec::new();
    for (i, (ids, record)) in records.iter().enumerate() {
        if kind == ModelKind::Ntas2 {
            let mut dist = vec![0.0; catalog.len()];
            for (app, gain) in record.gains() {
                dist[app.index()] = match target {
                    TargetDistribution::Gain => f64::from(gain),
                    TargetDistribution::Uniform => 1.0,
                };
            }
            let total: f64 = dist.iter().sum();
            dist.iter_mut().for_each(|v| *v /= total);
            out.push(Instance::Classification {
                ids: ids.clone(),
                target: dist,
            });
            continue;
        }
        let targets = &record.target_apps;
        let wanted = negatives * targets.len();
        let count = wanted.min(catalog.len() - targets.len());
        let negs = sample_negatives(record, catalog, count, seed::derive_indexed(seed_value, "record", i as u64))?;
        for (t, &app) in targets.iter().enumerate() {
            let own = negs.iter().skip(t * negatives).take(negatives);
            match kind {
                ModelKind::Ntas1Pointwise => {
                    out.push(Instance::Pointwise {
                        ids: ids.clone(),
                        app: app.index(),
                        label: 1.0,
                    });
                    out.extend(own.map(|n| Instance::Pointwise {
                        ids: ids.clone(),
                        app: n.index(),
                        label: 0.0,
                    }));
                }
                ModelKind::Ntas1Pairwise => out.extend(own.map(|n| Instance::Pairwise {
                    ids: ids.clone(),
                    positive: app.index(),
                    negative: n.index(),
                })),
                ModelKind::Ntas2 => unreachable!(),
            }
        }
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub valid_mrr: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct History {
    pub epochs: Vec<EpochRecord>,
    /// Epoch whose parameters were kept.
    pub best_epoch: usize,
}

impl History {
    /// CSV `epoch,train_loss,valid_mrr`; the last column is empty without validation data.
    pub fn write_csv(&self, mut out: impl Write) -> Result<()> {
        writeln!(out, "epoch,train_loss,valid_mrr")?;
        for r in &self.epochs {
            let valid = r.valid_mrr.map(|v| format!("{v:.6}")).unwrap_or_default();
            writeln!(out, "{},{:.6},{}", r.epoch, r.train_loss, valid)?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct TrainedModel {
    pub model: NeuralModel,
    pub history: History,
}

fn encode<'a>(data: &'a Dataset, vocab: &Vocabulary, tokenizer: &Tokenizer) -> Vec<(Vec<usize>, &'a QueryRecord)> {
    data.records()
        .iter()
        .map(|r| {
            let tokens = tokenizer.tokenize(&r.text);
            let ids = vocab.ids_of(&tokens).into_iter().map(|t| t as usize).collect();
            (ids, r)
        })
        .collect()
}

/// Mini-batch training with per-epoch validation MRR; returns the
/// best-validation snapshot (the last epoch without validation data).
pub fn train(
    kind: ModelKind,
    train_data: &Dataset,
    valid: Option<&Dataset>,
    config: &TrainingConfig,
) -> Result<TrainedModel> {
    config.validate()?;
    if train_data.is_empty() {
        return Err(Error::InsufficientData("empty training set".into()));
    }
    let tokenizer = Tokenizer::default();
    let token_lists: Vec<Vec<String>> = train_data
        .records()
        .iter()
        .map(|r| tokenizer.tokenize(&r.text))
        .collect();
    let vocab = Vocabulary::build(token_lists.iter());
    if vocab.is_empty() {
        return Err(Error::InsufficientData("training queries contain no terms".into()));
    }
    let catalog = train_data.catalog();
    if kind.scores_pairs() && catalog.len() < 2 {
        return Err(Error::InsufficientData("pair scorers need at least two apps".into()));
    }
    let dims = Dims {
        kind,
        vocab: vocab.len(),
        dim: config.embedding_dim,
        apps: catalog.len(),
        hidden: config.hidden,
    };
    let popularity = Popularity::from_dataset(train_data);
    let snapshot = |params: &Params| {
        NeuralModel::new(
            kind,
            params.clone(),
            &vocab,
            catalog.clone(),
            popularity.clone(),
            config.seed,
            config.dropout,
        )
    };

    let train_ids: Vec<_> = encode(train_data, &vocab, &tokenizer)
        .into_iter()
        .filter(|(ids, _)| !ids.is_empty())
        .collect();
    let valid_qrels = valid.map(Qrels::from_dataset);

    let mut params = Params::init(&dims, config.seed);
    let mut optimizer = Optimizer::new(config.optimizer, config.learning_rate);
    let mut history = History::default();
    let mut best: Option<(f64, NeuralModel)> = None;

    for epoch in 1..=config.epochs {
        let e = epoch as u64;
        let mut instances = build_instances(
            kind,
            &train_ids,
            &catalog,
            config.negatives,
            config.target,
            seed::derive_indexed(config.seed, "negatives", e),
        )?;
        instances.shuffle(&mut seed::rng(seed::derive_indexed(config.seed, "shuffle", e)));
        let mut dropout_rng = seed::rng(seed::derive_indexed(config.seed, "dropout", e));

        let mut loss_sum = 0.0;
        for (b, batch) in instances.chunks(config.batch_size).enumerate() {
            let masks = (config.dropout > 0.0)
                .then(|| DropoutMask::for_batch(batch, config.hidden, config.dropout, &mut dropout_rng));
            let (loss, grads) = compute_gradients(&params, kind, batch, masks.as_deref(), config.margin)?;
            if !loss.is_finite() || !grads.is_finite() {
                return Err(Error::Divergence { epoch, batch: b, loss });
            }
            optimizer.step(&mut params, &grads);
            loss_sum += loss * batch.len() as f64;
        }
        if !params.is_finite() {
            return Err(Error::Divergence {
                epoch,
                batch: instances.len().div_ceil(config.batch_size),
                loss: f64::NAN,
            });
        }
        let train_loss = loss_sum / instances.len().max(1) as f64;

        let model = snapshot(&params)?;
        let valid_mrr = match (valid, &valid_qrels) {
            (Some(v), Some(qrels)) if !v.is_empty() => {
                let total: f64 = v
                    .records()
                    .iter()
                    .map(|r| {
                        use crate::ranking::Ranker;
                        mrr(&model.rank(&r.query_id, &r.text), qrels)
                    })
                    .collect::<Result<Vec<f64>>>()?
                    .iter()
                    .sum();
                Some(total / v.len() as f64)
            }
            _ => None,
        };
        log::debug!("{kind} epoch {epoch}: loss {train_loss:.6}, valid MRR {valid_mrr:?}");
        history.epochs.push(EpochRecord {
            epoch,
            train_loss,
            valid_mrr,
        });

        match valid_mrr {
            Some(score) => {
                if best.as_ref().is_none_or(|(b, _)| score > *b) {
                    best = Some((score, model));
                    history.best_epoch = epoch;
                } else if config.patience > 0 && epoch - history.best_epoch >= config.patience {
                    break;
                }
            }
            None => {
                best = Some((f64::NAN, model));
                history.best_epoch = epoch;
            }
        }
    }
    let (_, model) = best.expect("at least one epoch ran");
    Ok(TrainedModel { model, history })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::read_dataset;

    fn record(targets: &[u32]) -> QueryRecord {
        QueryRecord {
            query_id: "q".into(),
            user_id: "u".into(),
            task_id: "t".into(),
            text: "x".into(),
            target_apps: targets.iter().copied().map(AppId).collect(),
        }
    }

    #[test]
    fn negatives_exclude_targets() {
        let catalog = AppCatalog::from_names(["a", "b", "c"]);
        let mut got = sample_negatives(&record(&[0]), &catalog, 2, 7).unwrap();
        got.sort();
        assert_eq!(got, vec![AppId(1), AppId(2)]);
        assert_eq!(
            sample_negatives(&record(&[0]), &catalog, 1, 7).unwrap(),
            sample_negatives(&record(&[0]), &catalog, 1, 7).unwrap()
        );
        assert!(sample_negatives(&record(&[0]), &catalog, 3, 7).is_err());
    }

    #[test]
    fn instance_shapes_per_kind() {
        let catalog = AppCatalog::from_names(["a", "b", "c", "d", "e"]);
        let r = record(&[3, 1]);
        let records = vec![(vec![0, 1], &r)];
        let point = build_instances(ModelKind::Ntas1Pointwise, &records, &catalog, 1, TargetDistribution::Gain, 0).unwrap();
        assert_eq!(point.len(), 4);
        assert_eq!(point.iter().filter(|i| matches!(i, Instance::Pointwise { label, .. } if *label == 1.0)).count(), 2);
        let pair = build_instances(ModelKind::Ntas1Pairwise, &records, &catalog, 2, TargetDistribution::Gain, 0).unwrap();
        assert_eq!(pair.len(), 3);
        for i in &pair {
            let Instance::Pairwise { positive, negative, .. } = i else { panic!() };
            assert!([3, 1].contains(positive));
            assert!(![3, 1].contains(negative));
        }
        let class = build_instances(ModelKind::Ntas2, &records, &catalog, 2, TargetDistribution::Gain, 0).unwrap();
        let Instance::Classification { target, .. } = &class[0] else { panic!() };
        assert_eq!(target, &vec![0.0, 1.0 / 3.0, 0.0, 2.0 / 3.0, 0.0]);
        let uniform = build_instances(ModelKind::Ntas2, &records, &catalog, 2, TargetDistribution::Uniform, 0).unwrap();
        let Instance::Classification { target, .. } = &uniform[0] else { panic!() };
        assert_eq!(target[1], 0.5);
    }

    fn toy() -> Dataset {
        let lines: Vec<String> = (0..40)
            .map(|i| {
                let (text, app) = match i % 4 {
                    0 => ("pizza near me", "yelp"),
                    1 => ("email from sam", "gmail"),
                    2 => ("directions home", "maps"),
                    _ => ("weather today", "weather"),
                };
                format!(r#"{{"query_id":"{i}","user_id":"u","task_id":"t","text":"{text}","apps":["{app}"]}}"#)
            })
            .collect();
        read_dataset(lines.join("\n").as_bytes()).unwrap()
    }

    fn small_config() -> TrainingConfig {
        TrainingConfig {
            learning_rate: 0.01,
            epochs: 30,
            patience: 0,
            embedding_dim: 8,
            hidden: (8, 8),
            batch_size: 8,
            dropout: 0.0,
            ..TrainingConfig::default()
        }
    }

    #[test]
    fn zero_learning_rate_keeps_initial_parameters() {
        let data = toy();
        let config = TrainingConfig {
            learning_rate: 0.0,
            patience: 0,
            epochs: 3,
            ..small_config()
        };
        let trained = train(ModelKind::Ntas1Pointwise, &data, Some(&data), &config).unwrap();
        let init = Params::init(&trained.model.dims(), config.seed);
        assert_eq!(trained.model.params(), &init);
        let mrrs: Vec<_> = trained.history.epochs.iter().map(|e| e.valid_mrr).collect();
        assert!(mrrs.windows(2).all(|w| w[0] == w[1]));
    }

    #[test]
    fn training_is_deterministic_and_learns_toy_data() {
        let data = toy();
        for kind in ModelKind::ALL {
            let a = train(kind, &data, Some(&data), &small_config()).unwrap();
            let b = train(kind, &data, Some(&data), &small_config()).unwrap();
            assert_eq!(a.model.params(), b.model.params());
            assert_eq!(a.history, b.history);
            let best = a.history.epochs[a.history.best_epoch - 1].valid_mrr.unwrap();
            assert!(best > 0.99, "{kind}: {best}");
        }
    }

    #[test]
    fn history_csv_layout() {
        let h = History {
            epochs: vec![
                EpochRecord { epoch: 1, train_loss: 0.5, valid_mrr: Some(0.25) },
                EpochRecord { epoch: 2, train_loss: 0.25, valid_mrr: None },
            ],
            best_epoch: 1,
        };
        let mut buf = Vec::new();
        h.write_csv(&mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "epoch,train_loss,valid_mrr\n1,0.500000,0.250000\n2,0.250000,\n"
        );
    }

    #[test]
    fn huge_learning_rate_reports_divergence() {
        let data = toy();
        let config = TrainingConfig {
            learning_rate: 1e300,
            optimizer: OptimizerKind::Sgd,
            ..small_config()
        };
        let err = train(ModelKind::Ntas1Pointwise, &data, None, &config).unwrap_err();
        assert!(matches!(err, Error::Divergence { .. }), "{err}");
    }
}
