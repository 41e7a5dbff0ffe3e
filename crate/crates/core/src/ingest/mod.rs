// SPDX-License-Identifier: Apache-2.0

//! Provider catalog ingestion: parsing, cleaning and cross-provider merging.

mod clean;
mod formats;
mod merge;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::context::FieldMap;

pub use clean::{clean_text, contains_tag};
pub use formats::parse_catalog;
pub use merge::{merge_providers, MergedFacility};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IngestError {
    #[error("malformed catalog at byte {offset}: {reason}")]
    MalformedCatalog { offset: usize, reason: String },
    #[error("catalog contains no facility entries")]
    EmptyCatalog,
    #[error("invalid provider descriptor: {0}")]
    InvalidDescriptor(String),
    #[error("no descriptor registered for provider `{0}`")]
    UnknownProvider(String),
    #[error("records disagree on facility identity: {0}")]
    ConflictingIdentity(String),
    #[error("nothing to merge")]
    EmptyMerge,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CatalogFormat {
    StructuredJson,
    DelimitedTable,
    HtmlFragments,
}

/// One catalog source. Priority 1 is the primary provider; larger numbers are
/// consulted only for fields the better-ranked providers leave empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderDescriptor {
    pub provider_id: String,
    pub priority: u32,
    pub format: CatalogFormat,
    /// Field name → feature category and split rule.
    #[serde(default)]
    pub field_map: FieldMap,
    /// Field holding the provider's own long-form description, used as the
    /// reference output of training examples.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_field: Option<String>,
}

impl ProviderDescriptor {
    pub fn validate(&self) -> Result<(), IngestError> {
        if self.provider_id.trim().is_empty() {
            return Err(IngestError::InvalidDescriptor("provider_id is empty".into()));
        }
        if self.priority == 0 {
            return Err(IngestError::InvalidDescriptor(format!(
                "provider `{}`: priority must be >= 1",
                self.provider_id
            )));
        }
        Ok(())
    }
}

/// Checks a full descriptor set: ids unique and non-empty, exactly one primary.
pub fn validate_descriptors(descriptors: &[ProviderDescriptor]) -> Result<(), IngestError> {
    let mut seen = BTreeSet::new();
    for d in descriptors {
        d.validate()?;
        if !seen.insert(d.provider_id.as_str()) {
            return Err(IngestError::InvalidDescriptor(format!("duplicate provider_id `{}`", d.provider_id)));
        }
    }
    let primaries = descriptors.iter().filter(|d| d.priority == 1).count();
    if !descriptors.is_empty() && primaries != 1 {
        return Err(IngestError::InvalidDescriptor(format!(
            "expected exactly one provider with priority 1, found {primaries}"
        )));
    }
    Ok(())
}

/// A facility as read from one provider's catalog.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FacilityRecord {
    pub facility_id: String,
    pub name: String,
    pub city: String,
    pub provider_id: String,
    pub raw_fields: BTreeMap<String, String>,
    #[serde(default)]
    pub cleaned_fields: BTreeMap<String, String>,
}

impl FacilityRecord {
    /// Populates `cleaned_fields` from `raw_fields`.
    pub fn clean(&mut self) {
        self.cleaned_fields = self.raw_fields.iter().map(|(k, v)| (k.clone(), clean_text(v))).collect();
    }

    pub fn cleaned(mut self) -> Self {
        self.clean();
        self
    }

    pub fn is_cleaned(&self) -> bool {
        !self.cleaned_fields.is_empty() || self.raw_fields.is_empty()
    }

    /// Whether this record has a usable value for `field`. Cleaned text is
    /// authoritative once present; markup-only raw values do not count.
    pub fn supplies(&self, field: &str) -> bool {
        match self.cleaned_fields.get(field) {
            Some(v) => !v.is_empty(),
            None if self.cleaned_fields.is_empty() => self.raw_fields.get(field).is_some_and(|v| !v.trim().is_empty()),
            None => false,
        }
    }

    /// Cleaned value when available, raw otherwise.
    pub fn field(&self, field: &str) -> Option<&str> {
        self.cleaned_fields.get(field).or_else(|| self.raw_fields.get(field)).map(String::as_str)
    }

    pub fn key(&self) -> FacilityKey {
        FacilityKey::new(&self.name, &self.city)
    }

    /// Checks the record invariants; returns a description of the first violation.
    pub fn check(&self) -> Result<(), String> {
        if self.facility_id.trim().is_empty() {
            return Err("facility_id is empty".into());
        }
        if self.provider_id.trim().is_empty() {
            return Err("provider_id is empty".into());
        }
        for (k, v) in &self.cleaned_fields {
            if !self.raw_fields.contains_key(k) {
                return Err(format!("cleaned field `{k}` has no raw counterpart"));
            }
            if contains_tag(v) {
                return Err(format!("cleaned field `{k}` still contains markup"));
            }
            if v.split_whitespace().collect::<Vec<_>>().join(" ") != *v {
                return Err(format!("cleaned field `{k}` has uncollapsed whitespace"));
            }
        }
        Ok(())
    }
}

/// Cross-provider identity: case-folded, punctuation-free (name, city).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct FacilityKey {
    pub name: String,
    pub city: String,
}

impl FacilityKey {
    pub fn new(name: &str, city: &str) -> Self {
        Self { name: normalize_identity(name), city: normalize_identity(city) }
    }
}

pub fn normalize_identity(s: &str) -> String {
    let folded: String = s.to_lowercase().chars().map(|c| if c.is_alphanumeric() { c } else { ' ' }).collect();
    clean::collapse_whitespace(&folded)
}

/// Groups records from any number of providers by [`FacilityKey`].
pub fn group_by_identity<'a, I>(records: I) -> BTreeMap<FacilityKey, Vec<FacilityRecord>>
where
    I: IntoIterator<Item = &'a FacilityRecord>,
{
    let mut groups: BTreeMap<FacilityKey, Vec<FacilityRecord>> = BTreeMap::new();
    for r in records {
        groups.entry(r.key()).or_default().push(r.clone());
    }
    groups
}
