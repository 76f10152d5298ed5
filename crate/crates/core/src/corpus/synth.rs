use std::collections::HashMap;
use std::sync::Arc;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{AppCatalog, AppId, Dataset, QueryRecord};
use crate::text::WordEmbeddingTable;
use crate::{seed, Error, Result};

/// Parameters of the synthetic query-log generator.
///
/// Each app owns a disjoint core vocabulary; each task of an app owns a
/// further disjoint set of task terms. Popular apps get more tasks, so every
/// task collects about `queries_per_task` queries. Query terms are drawn from the
/// shared noise pool with probability `noise_rate`, otherwise from the
/// task's terms with probability `task_term_rate`, otherwise from the
/// app's core terms (the head term with probability `head_term_share`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub num_apps: usize,
    pub core_terms_per_app: usize,
    pub shared_noise_terms: usize,
    pub noise_rate: f64,
    pub zipf_exponent: f64,
    pub num_queries: usize,
    pub num_users: usize,
    pub queries_per_task: usize,
    pub task_terms_per_task: usize,
    pub task_term_rate: f64,
    pub head_term_share: f64,
    pub min_terms: usize,
    pub max_terms: usize,
    pub second_app_prob: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            num_apps: 20,
            core_terms_per_app: 12,
            shared_noise_terms: 40,
            noise_rate: 0.05,
            zipf_exponent: 1.0,
            num_queries: 2000,
            num_users: 100,
            queries_per_task: 12,
            task_terms_per_task: 6,
            task_term_rate: 0.6,
            head_term_share: 0.0,
            min_terms: 2,
            max_terms: 6,
            second_app_prob: 0.3,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::InvalidConfig(format!("synthetic config: {m}")));
        if self.num_apps == 0 {
            return fail("num_apps must be at least 1");
        }
        if self.core_terms_per_app == 0 {
            return fail("core_terms_per_app must be at least 1");
        }
        if self.num_queries == 0 || self.num_users == 0 || self.queries_per_task == 0 {
            return fail("num_queries, num_users and queries_per_task must be at least 1");
        }
        if self.min_terms == 0 || self.min_terms > self.max_terms {
            return fail("need 1 <= min_terms <= max_terms");
        }
        for (name, p) in [
            ("noise_rate", self.noise_rate),
            ("task_term_rate", self.task_term_rate),
            ("head_term_share", self.head_term_share),
            ("second_app_prob", self.second_app_prob),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidConfig(format!(
                    "synthetic config: {name} = {p} outside [0, 1]"
                )));
            }
        }
        if self.noise_rate > 0.0 && self.shared_noise_terms == 0 {
            return fail("noise_rate > 0 needs shared_noise_terms > 0");
        }
        if self.task_term_rate > 0.0 && self.task_terms_per_task == 0 {
            return fail("task_term_rate > 0 needs task_terms_per_task > 0");
        }
        if !(self.zipf_exponent >= 0.0 && self.zipf_exponent.is_finite()) {
            return fail("zipf_exponent must be finite and non-negative");
        }
        Ok(())
    }

    pub fn app_name(app: usize) -> String {
        format!("app{app:02}")
    }

    pub fn core_term(app: usize, k: usize) -> String {
        format!("a{app:02}c{k:02}")
    }

    pub fn task_term(app: usize, task: usize, k: usize) -> String {
        format!("a{app:02}t{task:02}k{k:02}")
    }

    pub fn noise_term(k: usize) -> String {
        format!("n{k:03}")
    }

    pub fn task_id(app: usize, task: usize) -> String {
        format!("t{app:02}_{task:02}")
    }

    /// Number of tasks of every app: its expected query count divided by
    /// `queries_per_task`, rounded, and at least one.
    pub fn tasks_per_app(&self) -> Vec<usize> {
        let weights = self.popularity();
        let total: f64 = weights.iter().sum();
        weights
            .iter()
            .map(|w| {
                let expected = self.num_queries as f64 * w / total;
                ((expected / self.queries_per_task as f64).round() as usize).max(1)
            })
            .collect()
    }

    /// App popularity weights, `1 / rank^s`.
    pub fn popularity(&self) -> Vec<f64> {
        (1..=self.num_apps)
            .map(|r| (r as f64).powf(-self.zipf_exponent))
            .collect()
    }
}

/// Generate a dataset from `config`. Identical inputs give identical output.
pub fn generate_synthetic(config: &SynthConfig, seed_value: u64) -> Result<Dataset> {
    config.validate()?;
    let mut rng = seed::rng(seed::derive(seed_value, "synth"));
    let popularity = WeightedIndex::new(config.popularity())
        .map_err(|e| Error::InvalidConfig(format!("zipf weights: {e}")))?;
    let catalog = Arc::new(AppCatalog::from_names(
        (0..config.num_apps).map(SynthConfig::app_name),
    ));

    let tasks_per_app = config.tasks_per_app();
    let mut records = Vec::with_capacity(config.num_queries);
    for i in 0..config.num_queries {
        let app = popularity.sample(&mut rng);
        let task = rng.random_range(0..tasks_per_app[app]);
        let user = rng.random_range(0..config.num_users);
        let len = rng.random_range(config.min_terms..=config.max_terms);

        let terms: Vec<String> = (0..len)
            .map(|_| {
                if rng.random_bool(config.noise_rate) {
                    SynthConfig::noise_term(rng.random_range(0..config.shared_noise_terms))
                } else if rng.random_bool(config.task_term_rate) {
                    let k = rng.random_range(0..config.task_terms_per_task);
                    SynthConfig::task_term(app, task, k)
                } else if config.core_terms_per_app == 1 || rng.random_bool(config.head_term_share)
                {
                    SynthConfig::core_term(app, 0)
                } else {
                    SynthConfig::core_term(app, rng.random_range(1..config.core_terms_per_app))
                }
            })
            .collect();

        let mut target_apps = vec![AppId(app as u32)];
        if config.num_apps > 1 && rng.random_bool(config.second_app_prob) {
            let mut other = rng.random_range(0..config.num_apps - 1);
            if other >= app {
                other += 1;
            }
            target_apps.push(AppId(other as u32));
        }

        records.push(QueryRecord {
            query_id: format!("q{i:05}"),
            user_id: format!("u{user:03}"),
            task_id: SynthConfig::task_id(app, task),
            text: terms.join(" "),
            target_apps,
        });
    }
    Dataset::new(records, catalog)
}

/// Word vectors for the generator's vocabulary: every term of an app lies
/// near that app's random centroid, noise terms are isotropic.
pub fn synthetic_embeddings(
    config: &SynthConfig,
    dim: usize,
    spread: f64,
    seed_value: u64,
) -> Result<WordEmbeddingTable> {
    config.validate()?;
    if dim == 0 {
        return Err(Error::InvalidConfig("embedding dimension must be positive".into()));
    }
    let mut rng = seed::rng(seed::derive(seed_value, "synth-embeddings"));
    let gaussian = |rng: &mut seed::Rng| -> f64 {
        // Box-Muller; one draw per call keeps the stream simple
        let u1: f64 = rng.random_range(f64::EPSILON..1.0);
        let u2: f64 = rng.random();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    };
    let mut vectors: HashMap<String, Vec<f64>> = HashMap::new();
    for (app, &tasks) in config.tasks_per_app().iter().enumerate() {
        let centroid: Vec<f64> = (0..dim).map(|_| gaussian(&mut rng)).collect();
        let mut terms: Vec<String> = (0..config.core_terms_per_app)
            .map(|k| SynthConfig::core_term(app, k))
            .collect();
        for task in 0..tasks {
            for k in 0..config.task_terms_per_task {
                terms.push(SynthConfig::task_term(app, task, k));
            }
        }
        for term in terms {
            let v = centroid
                .iter()
                .map(|c| c + spread * gaussian(&mut rng))
                .collect();
            vectors.insert(term, v);
        }
    }
    for k in 0..config.shared_noise_terms {
        let v = (0..dim).map(|_| gaussian(&mut rng)).collect();
        vectors.insert(SynthConfig::noise_term(k), v);
    }
    WordEmbeddingTable::from_map(vectors)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::text::tokenize;

    #[test]
    fn same_seed_same_dataset() {
        let config = SynthConfig {
            num_queries: 200,
            ..SynthConfig::default()
        };
        assert_eq!(
            generate_synthetic(&config, 5).unwrap(),
            generate_synthetic(&config, 5).unwrap()
        );
        assert_ne!(
            generate_synthetic(&config, 5).unwrap(),
            generate_synthetic(&config, 6).unwrap()
        );
    }

    #[test]
    fn two_apps_without_noise_are_separable() {
        let config = SynthConfig {
            num_apps: 2,
            noise_rate: 0.0,
            num_queries: 300,
            ..SynthConfig::default()
        };
        let ds = generate_synthetic(&config, 1).unwrap();
        for r in ds.records() {
            let owner = format!("a{:02}", r.first_app().0);
            assert!(tokenize(&r.text).iter().all(|t| t.starts_with(&owner)));
        }
    }

    #[test]
    fn task_sizes_do_not_depend_on_app_popularity() {
        let config = SynthConfig::default();
        let tasks = config.tasks_per_app();
        assert!(tasks[0] > 5 * tasks[19]);
        let ds = generate_synthetic(&config, 3).unwrap();
        let mut per_task: HashMap<&str, (usize, usize)> = HashMap::new();
        for r in ds.records() {
            per_task.entry(r.task_id.as_str()).or_insert((r.first_app().index(), 0)).1 += 1;
        }
        let mean_size = |apps: std::ops::Range<usize>| {
            let sizes: Vec<usize> = per_task.values().filter(|(a, _)| apps.contains(a)).map(|v| v.1).collect();
            sizes.iter().sum::<usize>() as f64 / sizes.len() as f64
        };
        let (head, tail) = (mean_size(0..3), mean_size(10..20));
        assert!((head - 12.0).abs() < 3.0 && (tail - 12.0).abs() < 4.0, "{head} {tail}");
    }

    #[test]
    fn zero_exponent_gives_uniform_popularity() {
        let config = SynthConfig {
            num_apps: 4,
            zipf_exponent: 0.0,
            num_queries: 8000,
            second_app_prob: 0.0,
            ..SynthConfig::default()
        };
        let ds = generate_synthetic(&config, 2).unwrap();
        for count in ds.app_counts() {
            // binomial sd = sqrt(8000 * 0.25 * 0.75) ~ 39
            assert!((count as f64 - 2000.0).abs() < 200.0, "{count}");
        }
    }

    #[test]
    fn invalid_configs_rejected() {
        for bad in [
            SynthConfig { num_apps: 0, ..SynthConfig::default() },
            SynthConfig { min_terms: 0, ..SynthConfig::default() },
            SynthConfig { min_terms: 5, max_terms: 3, ..SynthConfig::default() },
            SynthConfig { noise_rate: 1.5, ..SynthConfig::default() },
            SynthConfig { shared_noise_terms: 0, ..SynthConfig::default() },
        ] {
            assert!(generate_synthetic(&bad, 0).is_err());
        }
    }

    #[test]
    fn embeddings_cover_vocabulary() {
        let config = SynthConfig {
            num_apps: 3,
            num_queries: 100,
            ..SynthConfig::default()
        };
        let table = synthetic_embeddings(&config, 16, 0.3, 0).unwrap();
        let ds = generate_synthetic(&config, 0).unwrap();
        for r in ds.records() {
            for t in tokenize(&r.text) {
                assert!(table.get(&t).is_some(), "{t}");
            }
        }
        assert_eq!(table.dim(), 16);
    }
}
