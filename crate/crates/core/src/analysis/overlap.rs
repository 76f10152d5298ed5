use std::collections::HashMap;
use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::corpus::{Dataset, QueryRecord};
use crate::text::{jaccard_sorted, Tokenizer};
use crate::Result;

pub const OVERLAP_THRESHOLDS: [f64; 3] = [0.25, 0.5, 0.75];

/// Which other queries a query is compared with.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub enum OverlapScope {
    /// Every other query in the dataset (or app group).
    #[default]
    All,
    /// Only queries of the same task.
    SameTask,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OverlapRow {
    /// "All apps" or an app name.
    pub label: String,
    pub queries: usize,
    /// Percentage of queries with a similar other query, per threshold;
    /// `None` when fewer than two queries are in scope.
    pub percentages: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OverlapTable {
    pub thresholds: Vec<f64>,
    pub rows: Vec<OverlapRow>,
}

impl OverlapTable {
    pub fn write_csv(&self, mut out: impl Write) -> Result<()> {
        let header: Vec<String> = self.thresholds.iter().map(|t| format!("gt_{t}")).collect();
        writeln!(out, "scope,queries,{}", header.join(","))?;
        for row in &self.rows {
            let cells: Vec<String> = match &row.percentages {
                Some(p) => p.iter().map(|v| format!("{v:.2}")).collect(),
                None => vec!["NA".to_string(); self.thresholds.len()],
            };
            writeln!(out, "{},{},{}", row.label, row.queries, cells.join(","))?;
        }
        Ok(())
    }
}

/// Highest Jaccard similarity of each query to any other query it may be
/// compared with; `None` when it has no partner.
fn max_similarities(sets: &[Vec<u32>], groups: &[usize]) -> Vec<Option<f64>> {
    (0..sets.len())
        .into_par_iter()
        .map(|i| {
            (0..sets.len())
                .filter(|&j| j != i && groups[j] == groups[i])
                .map(|j| jaccard_sorted(&sets[i], &sets[j]))
                .fold(None, |m: Option<f64>, s| Some(m.map_or(s, |m| m.max(s))))
        })
        .collect()
}

fn overlap_row(label: String, records: &[&QueryRecord], sets: &[Vec<u32>], scope: OverlapScope, thresholds: &[f64]) -> OverlapRow {
    let groups: Vec<usize> = match scope {
        OverlapScope::All => vec![0; records.len()],
        OverlapScope::SameTask => {
            let mut ids = HashMap::new();
            records
                .iter()
                .map(|r| {
                    let next = ids.len();
                    *ids.entry(r.task_id.as_str()).or_insert(next)
                })
                .collect()
        }
    };
    let percentages = (records.len() >= 2).then(|| {
        let best = max_similarities(sets, &groups);
        thresholds
            .iter()
            .map(|&t| {
                let hits = best.iter().filter(|b| b.is_some_and(|s| s > t)).count();
                100.0 * hits as f64 / records.len() as f64
            })
            .collect()
    });
    OverlapRow {
        label,
        queries: records.len(),
        percentages,
    }
}

/// Share of queries that have some other in-scope query with term-set
/// Jaccard similarity strictly above each threshold. The first row covers
/// all apps; with `per_app`, one row follows per app, restricted to the
/// queries targeting it.
pub fn query_overlap_table(
    dataset: &Dataset,
    tokenizer: &Tokenizer,
    thresholds: &[f64],
    per_app: bool,
    scope: OverlapScope,
) -> OverlapTable {
    let mut ids: HashMap<String, u32> = HashMap::new();
    let sets: Vec<Vec<u32>> = dataset
        .records()
        .iter()
        .map(|r| {
            let mut set: Vec<u32> = tokenizer
                .tokenize(&r.text)
                .into_iter()
                .map(|t| {
                    let next = ids.len() as u32;
                    *ids.entry(t).or_insert(next)
                })
                .collect();
            set.sort_unstable();
            set.dedup();
            set
        })
        .collect();
    let all: Vec<&QueryRecord> = dataset.records().iter().collect();
    let mut rows = vec![overlap_row("All apps".into(), &all, &sets, scope, thresholds)];
    if per_app {
        for app in dataset.apps().ids() {
            let (records, app_sets): (Vec<&QueryRecord>, Vec<Vec<u32>>) = dataset
                .records()
                .iter()
                .zip(&sets)
                .filter(|(r, _)| r.target_apps.contains(&app))
                .map(|(r, s)| (r, s.clone()))
                .unzip();
            if !records.is_empty() {
                rows.push(overlap_row(dataset.apps().name(app).to_string(), &records, &app_sets, scope, thresholds));
            }
        }
    }
    OverlapTable {
        thresholds: thresholds.to_vec(),
        rows,
    }
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;
    use crate::corpus::read_dataset;

    fn data(rows: &[(&str, &str, &str)]) -> Dataset {
        let lines: Vec<String> = rows
            .iter()
            .enumerate()
            .map(|(i, (task, text, app))| {
                serde_json::json!({"query_id": i.to_string(), "user_id": "u", "task_id": task, "text": text, "apps": [app]})
                    .to_string()
            })
            .collect();
        read_dataset(lines.join("\n").as_bytes()).unwrap()
    }

    fn table(d: &Dataset, per_app: bool, scope: OverlapScope) -> OverlapTable {
        query_overlap_table(d, &Tokenizer::default(), &OVERLAP_THRESHOLDS, per_app, scope)
    }

    #[test]
    fn identical_and_disjoint_queries() {
        let same = data(&[("t", "pizza near me", "yelp"), ("t", "pizza near me", "yelp")]);
        assert_eq!(table(&same, false, OverlapScope::All).rows[0].percentages, Some(vec![100.0; 3]));
        let apart = data(&[("t", "pizza", "yelp"), ("t", "email", "gmail"), ("t", "maps", "maps")]);
        assert_eq!(table(&apart, false, OverlapScope::All).rows[0].percentages, Some(vec![0.0; 3]));
    }

    #[test]
    fn thresholds_are_strict() {
        // {a,b} vs {b,c}: similarity exactly 1/3; {a,b,c,d} vs {a}: 0.25
        let d = data(&[("t", "a b", "x"), ("t", "b c", "x"), ("t", "e f g h", "y"), ("t", "e", "y")]);
        let row = &table(&d, false, OverlapScope::All).rows[0];
        assert_eq!(row.percentages, Some(vec![50.0, 0.0, 0.0]));
    }

    #[test]
    fn per_app_rows_and_absent_scopes() {
        let d = data(&[("t", "pizza near me", "yelp"), ("t", "pizza near you", "yelp"), ("t", "pizza", "maps")]);
        let t = table(&d, true, OverlapScope::All);
        assert_eq!(t.rows.len(), 3);
        let maps = t.rows.iter().find(|r| r.label == "maps").unwrap();
        assert_eq!(maps.percentages, None);
        let yelp = t.rows.iter().find(|r| r.label == "yelp").unwrap();
        assert_eq!(yelp.percentages, Some(vec![100.0, 0.0, 0.0]));
        let mut csv = Vec::new();
        t.write_csv(&mut csv).unwrap();
        assert!(String::from_utf8(csv).unwrap().contains("maps,1,NA,NA,NA"));
    }

    #[test]
    fn task_scope_ignores_other_tasks() {
        let d = data(&[("t1", "pizza near me", "yelp"), ("t2", "pizza near me", "yelp"), ("t2", "call mom", "phone")]);
        assert_eq!(table(&d, false, OverlapScope::All).rows[0].percentages.as_ref().unwrap()[0], 200.0 / 3.0);
        assert_eq!(table(&d, false, OverlapScope::SameTask).rows[0].percentages.as_ref().unwrap()[0], 0.0);
    }

    proptest! {
        #[test]
        fn percentages_bounded_and_non_increasing(texts in prop::collection::vec("[a-e]( [a-e]){0,3}", 2..12)) {
            let rows: Vec<(&str, &str, &str)> = texts.iter().map(|t| ("t", t.as_str(), "x")).collect();
            let p = table(&data(&rows), false, OverlapScope::All).rows[0].percentages.clone().unwrap();
            prop_assert!(p.iter().all(|v| (0.0..=100.0).contains(v)));
            prop_assert!(p.windows(2).all(|w| w[0] >= w[1]));
        }
    }
}
