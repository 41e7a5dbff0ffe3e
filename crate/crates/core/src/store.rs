// SPDX-License-Identifier: Apache-2.0

//! File-backed workspace: one JSON-lines file per collection under a root
//! directory, plus `meta.json` with the schema version. Every write replaces
//! the collection file through a temp-file rename, so a record is either fully
//! persisted or absent. Records are re-validated on load.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use parking_lot::Mutex;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::context::ContextDocument;
use crate::dataset::DatasetExample;
use crate::evaluation::AnnotationRecord;
use crate::generation::{GenerationRun, RunLedger};
use crate::ingest::{FacilityRecord, MergedFacility, ProviderDescriptor};
use crate::util;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}:{line}: {reason}")]
    Corrupt { path: PathBuf, line: usize, reason: String },
    #[error("workspace schema version {found} is not supported (expected {SCHEMA_VERSION})")]
    SchemaVersion { found: u32 },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> StoreError + '_ {
    move |source| StoreError::Io { path: path.to_owned(), source }
}

pub trait Keyed {
    fn key(&self) -> String;

    fn check(&self) -> Result<(), String> {
        Ok(())
    }
}

impl Keyed for ProviderDescriptor {
    fn key(&self) -> String {
        self.provider_id.clone()
    }

    fn check(&self) -> Result<(), String> {
        self.validate().map_err(|e| e.to_string())
    }
}

impl Keyed for FacilityRecord {
    fn key(&self) -> String {
        format!("{}/{}", self.provider_id, self.facility_id)
    }

    fn check(&self) -> Result<(), String> {
        FacilityRecord::check(self)
    }
}

impl Keyed for MergedFacility {
    fn key(&self) -> String {
        self.record.facility_id.clone()
    }
}

impl Keyed for ContextDocument {
    fn key(&self) -> String {
        self.facility_id.clone()
    }

    fn check(&self) -> Result<(), String> {
        ContextDocument::check(self).map_err(|e| e.to_string())
    }
}

impl Keyed for DatasetExample {
    fn key(&self) -> String {
        self.facility_id.clone()
    }
}

impl Keyed for GenerationRun {
    fn key(&self) -> String {
        self.run_id.clone()
    }
}

impl Keyed for AnnotationRecord {
    fn key(&self) -> String {
        format!("{}/{}", self.run_id, self.annotator)
    }
}

/// One collection, held in memory and mirrored to `path`.
pub struct Collection<T> {
    path: PathBuf,
    items: Mutex<BTreeMap<String, T>>,
}

impl<T: Keyed + Clone + Serialize + DeserializeOwned> Collection<T> {
    fn open(path: PathBuf) -> Result<Self, StoreError> {
        let mut items = BTreeMap::new();
        match fs::read_to_string(&path) {
            Ok(text) => {
                for (i, line) in text.lines().enumerate() {
                    if line.trim().is_empty() {
                        continue;
                    }
                    let corrupt = |reason: String| StoreError::Corrupt { path: path.clone(), line: i + 1, reason };
                    let item: T = serde_json::from_str(line).map_err(|e| corrupt(e.to_string()))?;
                    item.check().map_err(corrupt)?;
                    items.insert(item.key(), item);
                }
            }
            Err(e) if e.kind() == io::ErrorKind::NotFound => {}
            Err(e) => return Err(io_err(&path)(e)),
        }
        Ok(Self { path, items: Mutex::new(items) })
    }

    pub fn get(&self, key: &str) -> Option<T> {
        self.items.lock().get(key).cloned()
    }

    pub fn contains(&self, key: &str) -> bool {
        self.items.lock().contains_key(key)
    }

    /// All items in key order.
    pub fn list(&self) -> Vec<T> {
        self.items.lock().values().cloned().collect()
    }

    pub fn len(&self) -> usize {
        self.items.lock().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Inserts or replaces one item.
    pub fn put(&self, item: T) -> Result<(), StoreError> {
        self.put_all(vec![item])
    }

    /// Inserts or replaces several items with a single write.
    pub fn put_all(&self, batch: Vec<T>) -> Result<(), StoreError> {
        if batch.is_empty() {
            return Ok(());
        }
        let mut items = self.items.lock();
        let mut next = items.clone();
        for item in batch {
            next.insert(item.key(), item);
        }
        self.rewrite(&next)?;
        *items = next;
        Ok(())
    }

    /// Inserts `item` unless its key exists; returns the stored item and
    /// whether it was newly inserted.
    pub fn insert_new(&self, item: T) -> Result<(T, bool), StoreError> {
        let mut items = self.items.lock();
        if let Some(existing) = items.get(&item.key()) {
            return Ok((existing.clone(), false));
        }
        let mut next = items.clone();
        next.insert(item.key(), item.clone());
        self.rewrite(&next)?;
        *items = next;
        Ok((item, true))
    }

    /// Replaces the whole collection.
    pub fn replace_all(&self, all: Vec<T>) -> Result<(), StoreError> {
        let mut items = self.items.lock();
        let next: BTreeMap<String, T> = all.into_iter().map(|i| (i.key(), i)).collect();
        self.rewrite(&next)?;
        *items = next;
        Ok(())
    }

    fn rewrite(&self, items: &BTreeMap<String, T>) -> Result<(), StoreError> {
        let values: Vec<&T> = items.values().collect();
        util::write_atomic(&self.path, util::to_jsonl(&values).as_bytes()).map_err(io_err(&self.path))
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct Meta {
    schema_version: u32,
}

pub struct Workspace {
    root: PathBuf,
    pub providers: Collection<ProviderDescriptor>,
    pub records: Collection<FacilityRecord>,
    pub facilities: Collection<MergedFacility>,
    pub contexts: Collection<ContextDocument>,
    pub examples: Collection<DatasetExample>,
    pub runs: Collection<GenerationRun>,
    pub annotations: Collection<AnnotationRecord>,
}

impl Workspace {
    /// Opens `root`, creating it and its metadata when missing.
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let root = root.into();
        fs::create_dir_all(&root).map_err(io_err(&root))?;
        let meta_path = root.join("meta.json");
        match fs::read_to_string(&meta_path) {
            Ok(text) => {
                let meta: Meta = serde_json::from_str(&text).map_err(|e| StoreError::Corrupt {
                    path: meta_path.clone(),
                    line: e.line(),
                    reason: e.to_string(),
                })?;
                if meta.schema_version != SCHEMA_VERSION {
                    return Err(StoreError::SchemaVersion { found: meta.schema_version });
                }
            }
            Err(e) if e.kind() == io::ErrorKind::NotFound => {
                let meta =
                    serde_json::to_vec_pretty(&Meta { schema_version: SCHEMA_VERSION }).expect("meta serializes");
                util::write_atomic(&meta_path, &meta).map_err(io_err(&meta_path))?;
            }
            Err(e) => return Err(io_err(&meta_path)(e)),
        }
        let at = |name: &str| root.join(format!("{name}.jsonl"));
        Ok(Self {
            providers: Collection::open(at("providers"))?,
            records: Collection::open(at("records"))?,
            facilities: Collection::open(at("facilities"))?,
            contexts: Collection::open(at("contexts"))?,
            examples: Collection::open(at("examples"))?,
            runs: Collection::open(at("runs"))?,
            annotations: Collection::open(at("annotations"))?,
            root,
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn annotations_for(&self, run_id: &str) -> Vec<AnnotationRecord> {
        let prefix = format!("{run_id}/");
        self.annotations.list().into_iter().filter(|a| a.key().starts_with(&prefix) && a.run_id == run_id).collect()
    }
}

impl RunLedger for Workspace {
    fn find_run(&self, run_id: &str) -> Option<GenerationRun> {
        self.runs.get(run_id)
    }

    fn record_run(&self, run: &GenerationRun) -> Result<(), String> {
        self.runs.insert_new(run.clone()).map(|_| ()).map_err(|e| e.to_string())
    }
}
