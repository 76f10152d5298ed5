use std::collections::HashMap;
use std::sync::Arc;

use rayon::prelude::*;

use crate::corpus::{AppId, Dataset};
use crate::ranking::{RankedList, Ranker};
use crate::{Error, Result};

/// Graded relevance judgements per query.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Qrels {
    judgements: HashMap<String, Vec<(AppId, u8)>>,
}

impl Qrels {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_dataset(data: &Dataset) -> Self {
        let mut q = Qrels::new();
        for r in data.records() {
            q.insert(r.query_id.clone(), r.gains());
        }
        q
    }

    pub fn insert(&mut self, query_id: impl Into<String>, gains: Vec<(AppId, u8)>) {
        self.judgements.insert(query_id.into(), gains);
    }

    pub fn get(&self, query_id: &str) -> Result<&[(AppId, u8)]> {
        self.judgements
            .get(query_id)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::MissingQrels(query_id.to_string()))
    }

    pub fn len(&self) -> usize {
        self.judgements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.judgements.is_empty()
    }
}

fn gain_of(gains: &[(AppId, u8)], app: AppId) -> u8 {
    gains.iter().find(|g| g.0 == app).map_or(0, |g| g.1)
}

/// Reciprocal rank of the first relevant app; 0 when none is ranked.
pub fn mrr(ranked: &RankedList, qrels: &Qrels) -> Result<f64> {
    let gains = qrels.get(&ranked.query_id)?;
    Ok(ranked
        .apps()
        .position(|a| gain_of(gains, a) > 0)
        .map_or(0.0, |pos| 1.0 / (pos + 1) as f64))
}

/// 1 when the top app is relevant.
pub fn p_at_1(ranked: &RankedList, qrels: &Qrels) -> Result<f64> {
    let gains = qrels.get(&ranked.query_id)?;
    Ok(match ranked.apps().next() {
        Some(a) if gain_of(gains, a) > 0 => 1.0,
        _ => 0.0,
    })
}

fn dcg(gains: impl Iterator<Item = u8>, k: usize) -> f64 {
    gains
        .take(k)
        .enumerate()
        .map(|(i, g)| (2f64.powi(i32::from(g)) - 1.0) / ((i + 2) as f64).log2())
        .sum()
}

/// Exponential-gain nDCG at cutoff `k`; 0 when the ideal DCG is 0.
pub fn ndcg_at_k(ranked: &RankedList, qrels: &Qrels, k: usize) -> Result<f64> {
    let gains = qrels.get(&ranked.query_id)?;
    let mut ideal: Vec<u8> = gains.iter().map(|g| g.1).collect();
    ideal.sort_unstable_by(|a, b| b.cmp(a));
    let idcg = dcg(ideal.into_iter(), k);
    if idcg == 0.0 {
        return Ok(0.0);
    }
    Ok(dcg(ranked.apps().map(|a| gain_of(gains, a)), k) / idcg)
}

/// The reported metrics, in column order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Metric {
    Mrr,
    P1,
    Ndcg1,
    Ndcg3,
    Ndcg5,
}

impl Metric {
    pub const ALL: [Metric; 5] = [Metric::Mrr, Metric::P1, Metric::Ndcg1, Metric::Ndcg3, Metric::Ndcg5];

    pub fn label(self) -> &'static str {
        match self {
            Metric::Mrr => "MRR",
            Metric::P1 => "P@1",
            Metric::Ndcg1 => "nDCG@1",
            Metric::Ndcg3 => "nDCG@3",
            Metric::Ndcg5 => "nDCG@5",
        }
    }

    /// Lowercase column name for CSV output.
    pub fn column(self) -> &'static str {
        match self {
            Metric::Mrr => "mrr",
            Metric::P1 => "p1",
            Metric::Ndcg1 => "ndcg1",
            Metric::Ndcg3 => "ndcg3",
            Metric::Ndcg5 => "ndcg5",
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

/// All metrics for one query.
#[derive(Clone, Debug, PartialEq)]
pub struct QueryMetrics {
    pub query_id: String,
    pub values: [f64; 5],
}

impl QueryMetrics {
    pub fn compute(ranked: &RankedList, qrels: &Qrels) -> Result<Self> {
        Ok(QueryMetrics {
            query_id: ranked.query_id.clone(),
            values: [
                mrr(ranked, qrels)?,
                p_at_1(ranked, qrels)?,
                ndcg_at_k(ranked, qrels, 1)?,
                ndcg_at_k(ranked, qrels, 3)?,
                ndcg_at_k(ranked, qrels, 5)?,
            ],
        })
    }

    pub fn get(&self, metric: Metric) -> f64 {
        self.values[metric.index()]
    }
}

/// Per-metric means; zeros for an empty slice.
pub fn mean_metrics(per_query: &[QueryMetrics]) -> [f64; 5] {
    let mut sums = [0.0; 5];
    for q in per_query {
        for (s, v) in sums.iter_mut().zip(q.values) {
            *s += v;
        }
    }
    if !per_query.is_empty() {
        for s in &mut sums {
            *s /= per_query.len() as f64;
        }
    }
    sums
}

/// Rank every record of `data` with `ranker` and score it, in record order.
/// Apps are matched by name when `data` was loaded with its own catalog;
/// relevant apps the ranker does not know count as never retrieved.
pub fn evaluate(ranker: &dyn Ranker, data: &Dataset) -> Result<Vec<QueryMetrics>> {
    let qrels = if ranker.catalog() == data.apps() {
        Qrels::from_dataset(data)
    } else {
        Qrels::from_dataset(&data.reindexed(Arc::new(ranker.catalog().extended(data.apps())))?)
    };
    data.records()
        .par_iter()
        .map(|r| QueryMetrics::compute(&ranker.rank(&r.query_id, &r.text), &qrels))
        .collect()
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    fn list(apps: &[u32]) -> RankedList {
        RankedList {
            query_id: "q".into(),
            entries: apps.iter().enumerate().map(|(i, &a)| (AppId(a), -(i as f64))).collect(),
        }
    }

    fn qrels(gains: &[(u32, u8)]) -> Qrels {
        let mut q = Qrels::new();
        q.insert("q", gains.iter().map(|&(a, g)| (AppId(a), g)).collect());
        q
    }

    #[test]
    fn evaluation_aligns_separately_loaded_catalogs() {
        use crate::baselines::StaticRanker;
        use crate::corpus::{AppCatalog, QueryRecord};

        let rec = |id: &str, apps: &[u32]| QueryRecord {
            query_id: id.into(),
            user_id: "u".into(),
            task_id: "t".into(),
            text: "x".into(),
            target_apps: apps.iter().copied().map(AppId).collect(),
        };
        let train_apps = Arc::new(AppCatalog::from_names(["a", "b"]));
        let train = Dataset::new(vec![rec("1", &[1]), rec("2", &[1]), rec("3", &[0])], train_apps).unwrap();
        let ranker = StaticRanker::train(&train);
        // "b" is most popular; the test file lists it under a different id
        // and adds an app the ranker has never seen.
        let test_apps = Arc::new(AppCatalog::from_names(["c", "b"]));
        let test = Dataset::new(vec![rec("t1", &[1]), rec("t2", &[0])], test_apps).unwrap();
        let m = evaluate(&ranker, &test).unwrap();
        assert_eq!(m[0].values, [1.0; 5]);
        assert_eq!(m[1].values, [0.0; 5]);
    }

    #[test]
    fn reciprocal_rank_cases() {
        let q = qrels(&[(5, 2)]);
        assert_eq!(mrr(&list(&[5, 1, 2]), &q).unwrap(), 1.0);
        assert_eq!(mrr(&list(&[1, 2, 5]), &q).unwrap(), 1.0 / 3.0);
        assert_eq!(mrr(&list(&[1, 2]), &q).unwrap(), 0.0);
        assert!(matches!(mrr(&list(&[1]), &Qrels::new()), Err(Error::MissingQrels(_))));
    }

    #[test]
    fn precision_cases() {
        let q = qrels(&[(0, 2), (1, 1)]);
        assert_eq!(p_at_1(&list(&[0, 1, 2]), &q).unwrap(), 1.0);
        assert_eq!(p_at_1(&list(&[1, 0, 2]), &q).unwrap(), 1.0);
        assert_eq!(p_at_1(&list(&[2, 0, 1]), &q).unwrap(), 0.0);
    }

    #[test]
    fn ndcg_hand_cases() {
        // A=0 gain 2, B=1 gain 1, ranking [C, A, B]
        let q = qrels(&[(0, 2), (1, 1)]);
        let v = ndcg_at_k(&list(&[2, 0, 1, 3]), &q, 3).unwrap();
        let expected = (3.0 / 3f64.log2() + 0.5) / (3.0 + 1.0 / 3f64.log2());
        assert!((v - expected).abs() < 1e-12);
        assert!((v - 0.6590018048024133).abs() < 1e-12);
        assert!((ndcg_at_k(&list(&[1, 0, 2]), &q, 1).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        let single = qrels(&[(3, 2)]);
        for k in [1, 3, 5] {
            assert_eq!(ndcg_at_k(&list(&[3, 0, 1]), &single, k).unwrap(), 1.0);
        }
    }

    proptest! {
        #[test]
        fn metrics_bounded_and_mrr_dominates_p1(
            perm in Just((0u32..8).collect::<Vec<_>>()).prop_shuffle(),
            first in 0u32..8,
            extra in proptest::collection::btree_set(0u32..8, 0..3),
        ) {
            let mut gains = vec![(first, 2u8)];
            gains.extend(extra.into_iter().filter(|&a| a != first).map(|a| (a, 1u8)));
            let q = qrels(&gains);
            let m = QueryMetrics::compute(&list(&perm), &q).unwrap();
            prop_assert!(m.values.iter().all(|v| (0.0..=1.0).contains(v)));
            prop_assert!(m.get(Metric::Mrr) >= m.get(Metric::P1));
        }

        #[test]
        fn monotone_score_transform_preserves_metrics(scores in proptest::collection::vec(-5.0f64..5.0, 6)) {
            let q = qrels(&[(2, 2), (4, 1)]);
            let ties: Vec<usize> = (0..6).collect();
            let a = RankedList::from_scores("q", &scores, &ties);
            let moved: Vec<f64> = scores.iter().map(|s| (3.0 * s + 1.0).exp()).collect();
            let b = RankedList::from_scores("q", &moved, &ties);
            prop_assert_eq!(
                QueryMetrics::compute(&a, &q).unwrap().values,
                QueryMetrics::compute(&b, &q).unwrap().values
            );
        }
    }
}
