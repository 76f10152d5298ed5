//! Query records, the app catalog, dataset I/O, splitting and synthetic data.

mod io;
mod split;
mod stats;
mod synth;

use std::collections::{BTreeSet, HashMap, HashSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use io::{load_dataset, read_dataset, save_dataset, write_dataset};
pub use split::{split, Split, SplitPlan, SplitStrategy};
pub use stats::{dataset_stats, MeanStd, StatsReport};
pub use synth::{generate_synthetic, synthetic_embeddings, SynthConfig};

/// Dense app identifier; doubles as the row index into app-indexed matrices.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct AppId(pub u32);

impl AppId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// Lowercase, trim and collapse internal whitespace.
pub fn canonical_app_name(raw: &str) -> String {
    raw.split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

/// Interned app names. Immutable once built.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct AppCatalog {
    names: Vec<String>,
    by_name: HashMap<String, AppId>,
}

impl From<Vec<String>> for AppCatalog {
    fn from(names: Vec<String>) -> Self {
        let mut builder = CatalogBuilder::default();
        for name in &names {
            builder.intern(name);
        }
        builder.build()
    }
}

impl From<AppCatalog> for Vec<String> {
    fn from(catalog: AppCatalog) -> Self {
        catalog.names
    }
}

impl AppCatalog {
    /// Build a catalog from raw names; duplicates after canonicalization collapse.
    pub fn from_names<I, S>(names: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut builder = CatalogBuilder::default();
        for name in names {
            builder.intern(name.as_ref());
        }
        builder.build()
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    /// Look up a raw name (canonicalized before lookup).
    pub fn id(&self, name: &str) -> Option<AppId> {
        self.by_name.get(&canonical_app_name(name)).copied()
    }

    pub fn name(&self, id: AppId) -> &str {
        &self.names[id.index()]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn ids(&self) -> impl Iterator<Item = AppId> + '_ {
        (0..self.names.len() as u32).map(AppId)
    }

    /// This catalog followed by the apps of `other` it lacks, in `other`'s order.
    pub fn extended(&self, other: &AppCatalog) -> AppCatalog {
        AppCatalog::from_names(self.names.iter().chain(other.names()))
    }

    /// Position of every app when the catalog is sorted by name.
    pub fn name_ranks(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.names.len()).collect();
        order.sort_by(|&a, &b| self.names[a].cmp(&self.names[b]));
        let mut ranks = vec![0; order.len()];
        for (rank, idx) in order.into_iter().enumerate() {
            ranks[idx] = rank;
        }
        ranks
    }
}

#[derive(Default)]
pub(crate) struct CatalogBuilder {
    names: Vec<String>,
    by_name: HashMap<String, AppId>,
}

impl CatalogBuilder {
    pub(crate) fn intern(&mut self, raw: &str) -> AppId {
        let name = canonical_app_name(raw);
        if let Some(&id) = self.by_name.get(&name) {
            return id;
        }
        let id = AppId(self.names.len() as u32);
        self.names.push(name.clone());
        self.by_name.insert(name, id);
        id
    }

    pub(crate) fn build(self) -> AppCatalog {
        AppCatalog {
            names: self.names,
            by_name: self.by_name,
        }
    }
}

/// One query with the apps a user chose for it, in selection order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QueryRecord {
    pub query_id: String,
    pub user_id: String,
    pub task_id: String,
    pub text: String,
    pub target_apps: Vec<AppId>,
}

impl QueryRecord {
    /// Graded relevance: 2 for the first selected app, 1 for the rest.
    pub fn gains(&self) -> Vec<(AppId, u8)> {
        relevance_gains(self)
    }

    pub fn first_app(&self) -> AppId {
        self.target_apps[0]
    }
}

/// Graded relevance of a record's target apps. Apps not listed have gain 0.
pub fn relevance_gains(record: &QueryRecord) -> Vec<(AppId, u8)> {
    record
        .target_apps
        .iter()
        .enumerate()
        .map(|(pos, &app)| (app, if pos == 0 { 2 } else { 1 }))
        .collect()
}

/// A validated collection of records sharing one catalog.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Dataset {
    records: Vec<QueryRecord>,
    apps: Arc<AppCatalog>,
    tasks: BTreeSet<String>,
    users: BTreeSet<String>,
}

impl Dataset {
    pub fn new(records: Vec<QueryRecord>, apps: Arc<AppCatalog>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(records.len());
        for record in &records {
            if !seen.insert(record.query_id.as_str()) {
                return Err(Error::DuplicateQueryId(record.query_id.clone()));
            }
            if record.target_apps.is_empty() {
                return Err(Error::EmptyTargets(record.query_id.clone()));
            }
            let mut distinct = HashSet::new();
            for app in &record.target_apps {
                if app.index() >= apps.len() {
                    return Err(Error::UnknownAppId {
                        query_id: record.query_id.clone(),
                        app: app.index(),
                    });
                }
                if !distinct.insert(*app) {
                    return Err(Error::InvalidConfig(format!(
                        "query `{}` lists app `{}` twice",
                        record.query_id,
                        apps.name(*app)
                    )));
                }
            }
        }
        Ok(Self::from_validated(records, apps))
    }

    fn from_validated(records: Vec<QueryRecord>, apps: Arc<AppCatalog>) -> Self {
        let tasks = records.iter().map(|r| r.task_id.clone()).collect();
        let users = records.iter().map(|r| r.user_id.clone()).collect();
        Dataset {
            records,
            apps,
            tasks,
            users,
        }
    }

    /// A dataset over a subset of records, sharing this catalog.
    pub fn subset(&self, records: Vec<QueryRecord>) -> Dataset {
        Self::from_validated(records, Arc::clone(&self.apps))
    }

    /// The same records with app ids re-indexed against `catalog`.
    pub fn reindexed(&self, catalog: Arc<AppCatalog>) -> Result<Dataset> {
        if *catalog == *self.apps {
            return Ok(self.subset(self.records.clone()));
        }
        let records = self
            .records
            .iter()
            .map(|r| {
                let target_apps = r
                    .target_apps
                    .iter()
                    .map(|&a| {
                        let name = self.apps.name(a);
                        catalog.id(name).ok_or_else(|| Error::UnknownApp(name.to_string()))
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(QueryRecord { target_apps, ..r.clone() })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::from_validated(records, catalog))
    }

    pub fn records(&self) -> &[QueryRecord] {
        &self.records
    }

    pub fn apps(&self) -> &AppCatalog {
        &self.apps
    }

    pub fn catalog(&self) -> Arc<AppCatalog> {
        Arc::clone(&self.apps)
    }

    pub fn tasks(&self) -> &BTreeSet<String> {
        &self.tasks
    }

    pub fn users(&self) -> &BTreeSet<String> {
        &self.users
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Number of records listing each app anywhere in their targets.
    pub fn app_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.apps.len()];
        for record in &self.records {
            for app in &record.target_apps {
                counts[app.index()] += 1;
            }
        }
        counts
    }
}
