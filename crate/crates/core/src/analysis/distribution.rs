use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::Write;

use serde::Serialize;

use crate::corpus::{AppId, Dataset, MeanStd};
use crate::text::Tokenizer;
use crate::{Error, Result};

/// Histogram of a non-negative integer quantity plus its mean and
/// population standard deviation.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DistributionReport {
    pub name: String,
    pub histogram: BTreeMap<usize, usize>,
    pub mean: f64,
    pub std: f64,
}

impl DistributionReport {
    pub fn from_values(name: impl Into<String>, values: &[usize]) -> Self {
        let mut histogram = BTreeMap::new();
        for &v in values {
            *histogram.entry(v).or_insert(0) += 1;
        }
        let floats: Vec<f64> = values.iter().map(|&v| v as f64).collect();
        let MeanStd { mean, std } = MeanStd::of(&floats);
        DistributionReport {
            name: name.into(),
            histogram,
            mean,
            std,
        }
    }

    pub fn total(&self) -> usize {
        self.histogram.values().sum()
    }

    /// `value,count` rows.
    pub fn write_csv(&self, mut out: impl Write) -> Result<()> {
        writeln!(out, "value,count")?;
        for (v, c) in &self.histogram {
            writeln!(out, "{v},{c}")?;
        }
        Ok(())
    }
}

/// Apps ordered by how often they were selected.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AppCoverage {
    /// (app name, selections), most selected first; ties by name.
    pub apps: Vec<(String, usize)>,
    /// Share of all selections covered by the first `i + 1` apps.
    pub cumulative: Vec<f64>,
    /// (threshold, smallest number of apps reaching it).
    pub thresholds: Vec<(f64, usize)>,
}

pub const COVERAGE_THRESHOLDS: [f64; 2] = [0.8, 0.95];

impl AppCoverage {
    pub fn apps_to_reach(&self, share: f64) -> usize {
        self.cumulative
            .iter()
            .position(|&c| c >= share - 1e-12)
            .map_or(self.cumulative.len(), |i| i + 1)
    }

    pub fn write_csv(&self, mut out: impl Write) -> Result<()> {
        writeln!(out, "rank,app,selections,cumulative_share")?;
        for (i, ((name, count), cum)) in self.apps.iter().zip(&self.cumulative).enumerate() {
            writeln!(out, "{},{name},{count},{cum:.6}", i + 1)?;
        }
        Ok(())
    }
}

/// Selection counts per app, counting every (query, app) assignment once.
pub fn app_coverage(dataset: &Dataset) -> AppCoverage {
    let counts = dataset.app_counts();
    let mut apps: Vec<(String, usize)> = dataset
        .apps()
        .ids()
        .filter(|a| counts[a.index()] > 0)
        .map(|a| (dataset.apps().name(a).to_string(), counts[a.index()]))
        .collect();
    apps.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    let total: usize = apps.iter().map(|a| a.1).sum();
    let mut running = 0;
    let cumulative = apps
        .iter()
        .map(|a| {
            running += a.1;
            running as f64 / total as f64
        })
        .collect();
    let mut coverage = AppCoverage {
        apps,
        cumulative,
        thresholds: Vec::new(),
    };
    coverage.thresholds = COVERAGE_THRESHOLDS
        .iter()
        .map(|&t| (t, coverage.apps_to_reach(t)))
        .collect();
    coverage
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Grouping {
    User,
    Task,
}

impl Grouping {
    pub fn label(self) -> &'static str {
        match self {
            Grouping::User => "user",
            Grouping::Task => "task",
        }
    }
}

/// Distinct apps selected within each user or task.
pub fn unique_apps_per(dataset: &Dataset, group: Grouping) -> DistributionReport {
    let mut sets: BTreeMap<&str, BTreeSet<AppId>> = BTreeMap::new();
    for r in dataset.records() {
        let key = match group {
            Grouping::User => r.user_id.as_str(),
            Grouping::Task => r.task_id.as_str(),
        };
        sets.entry(key).or_default().extend(r.target_apps.iter().copied());
    }
    let values: Vec<usize> = sets.values().map(BTreeSet::len).collect();
    DistributionReport::from_values(format!("unique_apps_per_{}", group.label()), &values)
}

/// Term and character counts of a set of queries.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LengthStats {
    pub scope: String,
    pub terms: DistributionReport,
    pub characters: DistributionReport,
}

fn length_stats<'a>(scope: &str, texts: impl Iterator<Item = &'a str>, tokenizer: &Tokenizer) -> LengthStats {
    let (terms, chars): (Vec<usize>, Vec<usize>) = texts
        .map(|t| (tokenizer.tokenize(t).len(), t.chars().count()))
        .unzip();
    LengthStats {
        scope: scope.to_string(),
        terms: DistributionReport::from_values("query_terms", &terms),
        characters: DistributionReport::from_values("query_characters", &chars),
    }
}

/// Query length overall, then for every app with at least one query when
/// `per_app` is set. Characters are counted on the raw text.
pub fn query_length_stats(dataset: &Dataset, tokenizer: &Tokenizer, per_app: bool) -> Vec<LengthStats> {
    let mut out = vec![length_stats("all", dataset.records().iter().map(|r| r.text.as_str()), tokenizer)];
    if per_app {
        for app in dataset.apps().ids() {
            let texts: Vec<&str> = dataset
                .records()
                .iter()
                .filter(|r| r.target_apps.contains(&app))
                .map(|r| r.text.as_str())
                .collect();
            if !texts.is_empty() {
                out.push(length_stats(dataset.apps().name(app), texts.into_iter(), tokenizer));
            }
        }
    }
    out
}

pub fn write_length_stats_csv(stats: &[LengthStats], mut out: impl Write) -> Result<()> {
    writeln!(out, "scope,queries,mean_terms,std_terms,mean_characters,std_characters")?;
    for s in stats {
        writeln!(
            out,
            "{},{},{:.4},{:.4},{:.4},{:.4}",
            s.scope,
            s.terms.total(),
            s.terms.mean,
            s.terms.std,
            s.characters.mean,
            s.characters.std
        )?;
    }
    Ok(())
}

/// Most frequent tokens in queries targeting `app`, as shares of all their
/// tokens; ties by token.
pub fn unigram_distribution(
    dataset: &Dataset,
    tokenizer: &Tokenizer,
    app: &str,
    top_n: usize,
) -> Result<Vec<(String, f64)>> {
    let id = dataset.apps().id(app).ok_or_else(|| Error::UnknownApp(app.to_string()))?;
    let mut counts: HashMap<String, usize> = HashMap::new();
    let mut total = 0usize;
    for r in dataset.records().iter().filter(|r| r.target_apps.contains(&id)) {
        for t in tokenizer.tokenize(&r.text) {
            *counts.entry(t).or_insert(0) += 1;
            total += 1;
        }
    }
    if total == 0 {
        return Ok(Vec::new());
    }
    let mut ranked: Vec<(String, usize)> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    Ok(ranked
        .into_iter()
        .take(top_n)
        .map(|(t, c)| (t, c as f64 / total as f64))
        .collect())
}
