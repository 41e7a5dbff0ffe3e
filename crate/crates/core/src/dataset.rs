// SPDX-License-Identifier: Apache-2.0

//! Dataset objects (`input`, `context`, `output`), train/test splitting and
//! fine-tuning export.

use std::collections::BTreeSet;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::context::ContextDocument;
use crate::ingest::FacilityRecord;
use crate::util;

/// Request sentence for one facility. `{name}` and `{city}` are substituted.
pub const REQUEST_TEMPLATE: &str = "Write me a hotel brochure for the hotel {name} in {city}.";

/// Keys of an exported dataset line, in file order.
pub const EXPORT_KEYS: [&str; 3] = ["input", "context", "output"];

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("training example for `{0}` has no reference output")]
    MissingReference(String),
    #[error("context belongs to `{context}` but record is `{record}`")]
    ContextMismatch { record: String, context: String },
    #[error("cannot take {train} training examples from {available} and keep a test set")]
    InsufficientExamples { train: usize, available: usize },
    #[error("facility `{0}` appears more than once")]
    DuplicateFacility(String),
    #[error("invalid example for `{facility_id}`: {reason}")]
    InvalidExample { facility_id: String, reason: String },
    #[error("line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetExample {
    pub facility_id: String,
    pub split: Split,
    pub input: String,
    pub context: String,
    #[serde(default)]
    pub output: String,
}

/// The exported fine-tuning line: exactly `input`, `context`, `output`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetRecord {
    pub input: String,
    pub context: String,
    pub output: String,
}

impl DatasetExample {
    pub fn to_record(&self) -> DatasetRecord {
        DatasetRecord { input: self.input.clone(), context: self.context.clone(), output: self.output.clone() }
    }

    pub fn check(&self, name: &str) -> Result<(), DatasetError> {
        let invalid = |reason: &str| DatasetError::InvalidExample {
            facility_id: self.facility_id.clone(),
            reason: reason.into(),
        };
        if !self.input.contains(name) {
            return Err(invalid("input does not name the facility"));
        }
        if self.context.is_empty() {
            return Err(invalid("empty context"));
        }
        if self.split == Split::Train && self.output.trim().is_empty() {
            return Err(DatasetError::MissingReference(self.facility_id.clone()));
        }
        Ok(())
    }
}

pub fn render_request(template: &str, name: &str, city: &str) -> String {
    template.replace("{name}", name).replace("{city}", city)
}

/// Builds one example with the default [`REQUEST_TEMPLATE`].
pub fn build_example(
    record: &FacilityRecord,
    context: &ContextDocument,
    reference: Option<&str>,
    split: Split,
) -> Result<DatasetExample, DatasetError> {
    build_example_with(REQUEST_TEMPLATE, record, context, reference, split)
}

pub fn build_example_with(
    template: &str,
    record: &FacilityRecord,
    context: &ContextDocument,
    reference: Option<&str>,
    split: Split,
) -> Result<DatasetExample, DatasetError> {
    if context.facility_id != record.facility_id {
        return Err(DatasetError::ContextMismatch {
            record: record.facility_id.clone(),
            context: context.facility_id.clone(),
        });
    }
    let output = reference.map(str::trim).unwrap_or_default().to_owned();
    let example = DatasetExample {
        facility_id: record.facility_id.clone(),
        split,
        input: render_request(template, &record.name, &record.city),
        context: context.serialized.clone(),
        output,
    };
    example.check(&record.name)?;
    Ok(example)
}

/// Deterministic facility-disjoint split. Examples are ordered by facility id
/// before the seeded shuffle, so the result does not depend on input order.
pub fn split_dataset(
    mut examples: Vec<DatasetExample>,
    train_count: usize,
    seed: u64,
) -> Result<(Vec<DatasetExample>, Vec<DatasetExample>), DatasetError> {
    let mut ids = BTreeSet::new();
    for e in &examples {
        if !ids.insert(e.facility_id.clone()) {
            return Err(DatasetError::DuplicateFacility(e.facility_id.clone()));
        }
    }
    if train_count >= examples.len() {
        return Err(DatasetError::InsufficientExamples { train: train_count, available: examples.len() });
    }

    examples.sort_by(|a, b| a.facility_id.cmp(&b.facility_id));
    examples.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut test = examples.split_off(train_count);
    let mut train = examples;
    for e in &mut train {
        e.split = Split::Train;
        if e.output.trim().is_empty() {
            return Err(DatasetError::MissingReference(e.facility_id.clone()));
        }
    }
    for e in &mut test {
        e.split = Split::Test;
    }
    train.sort_by(|a, b| a.facility_id.cmp(&b.facility_id));
    test.sort_by(|a, b| a.facility_id.cmp(&b.facility_id));
    Ok((train, test))
}

/// Writes fine-tuning lines and returns how many were written.
pub fn export_dataset(examples: &[DatasetExample], path: &Path) -> Result<usize, DatasetError> {
    let records: Vec<DatasetRecord> = examples.iter().map(DatasetExample::to_record).collect();
    util::write_atomic(path, util::to_jsonl(&records).as_bytes())?;
    Ok(records.len())
}

pub fn import_dataset(path: &Path) -> Result<Vec<DatasetRecord>, DatasetError> {
    let text = std::fs::read_to_string(path)?;
    util::from_jsonl(&text).map_err(|(line, e)| DatasetError::Malformed { line, reason: e.to_string() })
}
