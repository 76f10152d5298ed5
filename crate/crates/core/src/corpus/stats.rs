use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::io::Write;

use super::{AppId, Dataset};
use crate::text::Tokenizer;
use crate::{Error, Result};

/// Mean and population standard deviation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> MeanStd {
        if values.is_empty() {
            return MeanStd { mean: 0.0, std: 0.0 };
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        MeanStd {
            mean,
            std: var.sqrt(),
        }
    }
}

/// Summary statistics of a query log, one field per reported row.
#[derive(Clone, Debug, PartialEq)]
pub struct StatsReport {
    pub queries: usize,
    pub unique_queries: usize,
    pub users: usize,
    pub tasks: usize,
    pub unique_apps: usize,
    pub unique_first_apps: usize,
    pub unique_second_apps: usize,
    pub unique_apps_per_task: MeanStd,
    pub queries_per_user: MeanStd,
    pub queries_per_task: MeanStd,
    pub query_terms: MeanStd,
    pub query_characters: MeanStd,
}

impl StatsReport {
    pub fn rows(&self) -> Vec<(&'static str, String)> {
        let mut rows = vec![
            ("queries", self.queries.to_string()),
            ("unique_queries", self.unique_queries.to_string()),
            ("users", self.users.to_string()),
            ("tasks", self.tasks.to_string()),
            ("unique_apps", self.unique_apps.to_string()),
            ("unique_first_apps", self.unique_first_apps.to_string()),
            ("unique_second_apps", self.unique_second_apps.to_string()),
        ];
        for (mean_name, std_name, ms) in [
            ("mean_unique_apps_per_task", "std_unique_apps_per_task", self.unique_apps_per_task),
            ("mean_queries_per_user", "std_queries_per_user", self.queries_per_user),
            ("mean_queries_per_task", "std_queries_per_task", self.queries_per_task),
            ("mean_query_terms", "std_query_terms", self.query_terms),
            ("mean_query_characters", "std_query_characters", self.query_characters),
        ] {
            rows.push((mean_name, format!("{:.4}", ms.mean)));
            rows.push((std_name, format!("{:.4}", ms.std)));
        }
        rows
    }

    /// Two-column `metric,value` CSV.
    pub fn write_csv(&self, mut out: impl Write) -> Result<()> {
        writeln!(out, "metric,value")?;
        for (name, value) in self.rows() {
            writeln!(out, "{name},{value}")?;
        }
        Ok(())
    }
}

pub fn dataset_stats(dataset: &Dataset, tokenizer: &Tokenizer) -> Result<StatsReport> {
    if dataset.is_empty() {
        return Err(Error::InsufficientData("empty dataset".into()));
    }
    let records = dataset.records();
    let unique_queries = records
        .iter()
        .map(|r| r.text.as_str())
        .collect::<HashSet<_>>()
        .len();
    let unique_apps = records
        .iter()
        .flat_map(|r| r.target_apps.iter())
        .collect::<HashSet<_>>()
        .len();
    let unique_first_apps = records
        .iter()
        .map(|r| r.target_apps[0])
        .collect::<HashSet<_>>()
        .len();
    let unique_second_apps = records
        .iter()
        .filter_map(|r| r.target_apps.get(1))
        .collect::<HashSet<_>>()
        .len();

    let mut apps_per_task: BTreeMap<&str, BTreeSet<AppId>> = BTreeMap::new();
    let mut per_task: BTreeMap<&str, usize> = BTreeMap::new();
    let mut per_user: BTreeMap<&str, usize> = BTreeMap::new();
    for r in records {
        apps_per_task
            .entry(&r.task_id)
            .or_default()
            .extend(r.target_apps.iter().copied());
        *per_task.entry(&r.task_id).or_default() += 1;
        *per_user.entry(&r.user_id).or_default() += 1;
    }
    let as_f64 = |it: &mut dyn Iterator<Item = usize>| it.map(|v| v as f64).collect::<Vec<_>>();

    Ok(StatsReport {
        queries: records.len(),
        unique_queries,
        users: dataset.users().len(),
        tasks: dataset.tasks().len(),
        unique_apps,
        unique_first_apps,
        unique_second_apps,
        unique_apps_per_task: MeanStd::of(&as_f64(&mut apps_per_task.values().map(BTreeSet::len))),
        queries_per_user: MeanStd::of(&as_f64(&mut per_user.values().copied())),
        queries_per_task: MeanStd::of(&as_f64(&mut per_task.values().copied())),
        query_terms: MeanStd::of(&as_f64(
            &mut records.iter().map(|r| tokenizer.tokenize(&r.text).len()),
        )),
        query_characters: MeanStd::of(&as_f64(&mut records.iter().map(|r| r.text.chars().count()))),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::read_dataset;

    #[test]
    fn single_record_has_zero_spread() {
        let input = r#"{"query_id":"q","user_id":"u","task_id":"t","text":"sam email now","apps":["gmail","contacts"]}"#;
        let ds = read_dataset(input.as_bytes()).unwrap();
        let s = dataset_stats(&ds, &Tokenizer::default()).unwrap();
        assert_eq!(s.queries, 1);
        assert_eq!(s.unique_second_apps, 1);
        assert_eq!(s.query_terms, MeanStd { mean: 3.0, std: 0.0 });
        assert_eq!(s.query_characters.mean, 13.0);
        assert_eq!(s.unique_apps_per_task, MeanStd { mean: 2.0, std: 0.0 });
        assert_eq!(s.queries_per_user.std, 0.0);
    }

    #[test]
    fn csv_has_all_rows() {
        let input = r#"{"query_id":"q","user_id":"u","task_id":"t","text":"a b","apps":["x"]}"#;
        let ds = read_dataset(input.as_bytes()).unwrap();
        let mut buf = Vec::new();
        dataset_stats(&ds, &Tokenizer::default())
            .unwrap()
            .write_csv(&mut buf)
            .unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("metric,value\nqueries,1\n"));
        assert!(text.contains("mean_query_terms,2.0000"));
        assert_eq!(text.lines().count(), 1 + 7 + 10);
    }
}
