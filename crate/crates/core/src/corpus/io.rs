use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::{CatalogBuilder, Dataset, QueryRecord};
use crate::{Error, Result};

const KNOWN_FIELDS: [&str; 5] = ["query_id", "user_id", "task_id", "text", "apps"];

#[derive(Deserialize)]
struct RawRecord {
    query_id: String,
    user_id: String,
    task_id: String,
    text: String,
    apps: Vec<String>,
}

#[derive(Serialize)]
struct OutRecord<'a> {
    query_id: &'a str,
    user_id: &'a str,
    task_id: &'a str,
    text: &'a str,
    apps: Vec<&'a str>,
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::file(path, e))?;
    read_dataset(BufReader::new(file))
}

/// Parse line-delimited JSON records. Blank lines are skipped.
pub fn read_dataset(reader: impl Read) -> Result<Dataset> {
    let reader = BufReader::new(reader);
    let mut builder = CatalogBuilder::default();
    let mut records = Vec::new();
    let mut warned = BTreeSet::new();

    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let malformed = |message: String| Error::Malformed {
            line: line_no,
            message,
        };
        let object: Map<String, Value> =
            serde_json::from_str(&line).map_err(|e| malformed(e.to_string()))?;
        for key in object.keys() {
            if !KNOWN_FIELDS.contains(&key.as_str()) && warned.insert(key.clone()) {
                log::warn!("line {line_no}: ignoring unknown field `{key}`");
            }
        }
        let raw: RawRecord =
            serde_json::from_value(Value::Object(object)).map_err(|e| malformed(e.to_string()))?;
        if raw.apps.is_empty() {
            return Err(Error::EmptyTargets(raw.query_id));
        }
        let mut target_apps = Vec::with_capacity(raw.apps.len());
        for name in &raw.apps {
            if name.trim().is_empty() {
                return Err(malformed(format!(
                    "query `{}` has an empty app name",
                    raw.query_id
                )));
            }
            let id = builder.intern(name);
            if target_apps.contains(&id) {
                log::warn!(
                    "line {line_no}: query `{}` repeats app `{name}`; keeping first occurrence",
                    raw.query_id
                );
            } else {
                target_apps.push(id);
            }
        }
        records.push(QueryRecord {
            query_id: raw.query_id,
            user_id: raw.user_id,
            task_id: raw.task_id,
            text: raw.text,
            target_apps,
        });
    }
    Dataset::new(records, Arc::new(builder.build()))
}

pub fn save_dataset(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::file(path, e))?;
    let mut writer = BufWriter::new(file);
    write_dataset(dataset, &mut writer)?;
    writer.flush()?;
    Ok(())
}

pub fn write_dataset(dataset: &Dataset, mut writer: impl Write) -> Result<()> {
    let catalog = dataset.apps();
    for record in dataset.records() {
        let out = OutRecord {
            query_id: &record.query_id,
            user_id: &record.user_id,
            task_id: &record.task_id,
            text: &record.text,
            apps: record.target_apps.iter().map(|&a| catalog.name(a)).collect(),
        };
        serde_json::to_writer(&mut writer, &out).map_err(std::io::Error::from)?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}
