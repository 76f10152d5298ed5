//! Ranked lists and the contract every ranker satisfies.

use serde::{Deserialize, Serialize};

use crate::corpus::{AppCatalog, AppId, Dataset};

/// One query's full ordering of the catalog.
#[derive(Clone, Debug, PartialEq)]
pub struct RankedList {
    pub query_id: String,
    pub entries: Vec<(AppId, f64)>,
}

impl RankedList {
    /// Sort apps by score descending, breaking ties by `tiebreak` ascending
    /// (a position per app, e.g. from [`AppCatalog::name_ranks`]).
    pub fn from_scores(query_id: impl Into<String>, scores: &[f64], tiebreak: &[usize]) -> Self {
        debug_assert_eq!(scores.len(), tiebreak.len());
        let mut order: Vec<usize> = (0..scores.len()).collect();
        order.sort_by(|&a, &b| {
            scores[b]
                .total_cmp(&scores[a])
                .then(tiebreak[a].cmp(&tiebreak[b]))
        });
        RankedList {
            query_id: query_id.into(),
            entries: order
                .into_iter()
                .map(|i| (AppId(i as u32), scores[i]))
                .collect(),
        }
    }

    pub fn apps(&self) -> impl Iterator<Item = AppId> + '_ {
        self.entries.iter().map(|e| e.0)
    }

    pub fn top(&self, k: usize) -> &[(AppId, f64)] {
        &self.entries[..k.min(self.entries.len())]
    }

    /// True when the list is a permutation of `0..n` with non-increasing scores.
    pub fn is_total_over(&self, n: usize) -> bool {
        let mut seen = vec![false; n];
        for &(app, _) in &self.entries {
            match seen.get_mut(app.index()) {
                Some(s) if !*s => *s = true,
                _ => return false,
            }
        }
        self.entries.len() == n
            && self
                .entries
                .windows(2)
                .all(|w| w[0].1.total_cmp(&w[1].1).is_ge())
    }
}

/// Anything that orders the whole catalog for a query.
///
/// `rank` returns every catalog app exactly once with non-increasing scores
/// and is deterministic for a fixed model.
pub trait Ranker: Send + Sync {
    fn name(&self) -> &str;

    fn catalog(&self) -> &AppCatalog;

    fn rank(&self, query_id: &str, text: &str) -> RankedList;
}

/// Popularity order: training selections descending, then app name.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Popularity {
    counts: Vec<usize>,
    /// Position of each app in popularity order.
    positions: Vec<usize>,
}

impl Popularity {
    pub fn from_counts(counts: Vec<usize>, catalog: &AppCatalog) -> Self {
        let names = catalog.name_ranks();
        let mut order: Vec<usize> = (0..counts.len()).collect();
        order.sort_by(|&a, &b| counts[b].cmp(&counts[a]).then(names[a].cmp(&names[b])));
        let mut positions = vec![0; order.len()];
        for (pos, app) in order.into_iter().enumerate() {
            positions[app] = pos;
        }
        Popularity { counts, positions }
    }

    /// Count every occurrence of an app in a training target list.
    pub fn from_dataset(train: &Dataset) -> Self {
        Self::from_counts(train.app_counts(), train.apps())
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn positions(&self) -> &[usize] {
        &self.positions
    }

    pub fn order(&self) -> Vec<AppId> {
        let mut order = vec![AppId(0); self.positions.len()];
        for (app, &pos) in self.positions.iter().enumerate() {
            order[pos] = AppId(app as u32);
        }
        order
    }
}
