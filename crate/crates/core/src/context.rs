// SPDX-License-Identifier: Apache-2.0

//! Categorized feature extraction and the serialized context string.
//!
//! A context reads `Category: item, item; Category: item`. Categories always
//! appear in [`FeatureCategory::ALL`] order and empty ones are left out.
//! Semicolons may not occur inside an item; commas and backslashes inside an
//! item are written as `\,` and `\\`.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{clean_text, FacilityRecord, ProviderDescriptor};

pub const MAX_FEATURE_CHARS: usize = 200;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ContextError {
    #[error("facility `{0}` yields no features")]
    NoFeatures(String),
    #[error("feature at index {index} breaks category grouping")]
    UngroupedFeatures { index: usize },
    #[error("context syntax error at byte {position}: {reason}")]
    ContextSyntax { position: usize, reason: String },
    #[error("invalid feature: {0}")]
    InvalidFeature(String),
    #[error("duplicate feature id `{0}`")]
    DuplicateFeatureId(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum FeatureCategory {
    Recreation,
    Services,
    Dining,
    Rooms,
    AdditionalServices,
    #[serde(rename = "NearbyPOIs")]
    NearbyPois,
}

impl FeatureCategory {
    pub const ALL: [FeatureCategory; 6] = [
        FeatureCategory::Recreation,
        FeatureCategory::Services,
        FeatureCategory::Dining,
        FeatureCategory::Rooms,
        FeatureCategory::AdditionalServices,
        FeatureCategory::NearbyPois,
    ];

    /// Label used in serialized contexts.
    pub fn label(self) -> &'static str {
        match self {
            FeatureCategory::Recreation => "Recreation",
            FeatureCategory::Services => "Services",
            FeatureCategory::Dining => "Dining",
            FeatureCategory::Rooms => "Rooms",
            FeatureCategory::AdditionalServices => "Additional Services",
            FeatureCategory::NearbyPois => "Nearby POIs",
        }
    }

    pub fn slug(self) -> &'static str {
        match self {
            FeatureCategory::Recreation => "recreation",
            FeatureCategory::Services => "services",
            FeatureCategory::Dining => "dining",
            FeatureCategory::Rooms => "rooms",
            FeatureCategory::AdditionalServices => "additional-services",
            FeatureCategory::NearbyPois => "nearby-pois",
        }
    }

    pub fn from_label(label: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.label() == label)
    }

    fn rank(self) -> usize {
        self as usize
    }
}

impl fmt::Display for FeatureCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// One countable amenity or fact.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Feature {
    pub feature_id: String,
    pub category: FeatureCategory,
    pub text: String,
}

impl Feature {
    pub fn new(
        feature_id: impl Into<String>,
        category: FeatureCategory,
        text: impl Into<String>,
    ) -> Result<Self, ContextError> {
        let feature = Self { feature_id: feature_id.into(), category, text: text.into() };
        feature.check()?;
        Ok(feature)
    }

    pub fn check(&self) -> Result<(), ContextError> {
        let invalid = |why: &str| Err(ContextError::InvalidFeature(format!("`{}`: {why}", self.text)));
        if self.feature_id.is_empty() {
            return invalid("empty feature id");
        }
        if self.text.is_empty() {
            return invalid("empty text");
        }
        if self.text.chars().count() > MAX_FEATURE_CHARS {
            return invalid("longer than 200 characters");
        }
        if self.text.contains(';') {
            return invalid("contains a semicolon");
        }
        if self.text.trim() != self.text || self.text.chars().any(char::is_control) {
            return invalid("untrimmed or contains control characters");
        }
        Ok(())
    }
}

/// Sequential id for the `n`th (1-based) feature of a category.
pub fn feature_id(category: FeatureCategory, n: usize) -> String {
    format!("{}-{n}", category.slug())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SplitRule {
    CommaSplit,
    SentenceSplit,
    Passthrough,
}

impl SplitRule {
    /// Atomic phrases of a cleaned value, in order, blanks removed.
    pub fn split(self, value: &str) -> Vec<String> {
        let pieces: Vec<&str> = match self {
            SplitRule::CommaSplit => value.split([',', ';']).collect(),
            SplitRule::SentenceSplit => split_sentences(value),
            SplitRule::Passthrough => vec![value],
        };
        pieces.into_iter().filter_map(normalize_phrase).collect()
    }
}

fn split_sentences(value: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut start = 0;
    let mut chars = value.char_indices().peekable();
    while let Some((i, c)) = chars.next() {
        let at_break = matches!(c, '.' | '!' | '?' | ';') && chars.peek().is_none_or(|(_, next)| next.is_whitespace());
        if at_break {
            out.push(&value[start..i + c.len_utf8()]);
            start = i + c.len_utf8();
        }
    }
    out.push(&value[start..]);
    out
}

fn normalize_phrase(piece: &str) -> Option<String> {
    let text: String = piece.chars().filter(|c| !c.is_control()).map(|c| if c == ';' { ',' } else { c }).collect();
    let text = text.trim().trim_end_matches(['.', '!', '?', ',']).trim();
    if text.is_empty() {
        return None;
    }
    Some(truncate_words(text, MAX_FEATURE_CHARS))
}

fn truncate_words(text: &str, max_chars: usize) -> String {
    if text.chars().count() <= max_chars {
        return text.to_owned();
    }
    let cut: String = text.chars().take(max_chars).collect();
    match cut.rfind(' ') {
        Some(space) if space > 0 => cut[..space].trim_end().to_owned(),
        _ => cut,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldRule {
    pub field: String,
    pub category: FeatureCategory,
    pub split: SplitRule,
}

/// Declarative field → category table. Rule order is extraction order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FieldMap {
    pub rules: Vec<FieldRule>,
}

static DEFAULT_FIELD_MAP: &str = include_str!("../config/field_map.json");

impl FieldMap {
    pub fn new(rules: Vec<FieldRule>) -> Self {
        Self { rules }
    }

    /// The table shipped in `config/field_map.json`.
    pub fn shipped() -> Self {
        serde_json::from_str(DEFAULT_FIELD_MAP).expect("shipped field map parses")
    }

    pub fn rule(&self, field: &str) -> Option<&FieldRule> {
        self.rules.iter().find(|r| r.field == field)
    }

    /// Union of the descriptors' tables followed by the shipped table; for a
    /// field named more than once the best-ranked provider's rule wins and the
    /// shipped rule applies only to fields no provider maps.
    pub fn layered(descriptors: &[ProviderDescriptor]) -> Self {
        let mut ranked: Vec<&ProviderDescriptor> = descriptors.iter().collect();
        ranked.sort_by_key(|d| (d.priority, d.provider_id.clone()));
        let shipped = Self::shipped();
        let mut seen = BTreeSet::new();
        let rules = ranked
            .iter()
            .flat_map(|d| d.field_map.rules.iter())
            .chain(shipped.rules.iter())
            .filter(|r| seen.insert(r.field.clone()))
            .cloned()
            .collect();
        Self { rules }
    }
}

/// Extracts categorized features from a cleaned record.
pub fn extract_features(record: &FacilityRecord, field_map: &FieldMap) -> Result<Vec<Feature>, ContextError> {
    let mut buckets: Vec<Vec<String>> = vec![Vec::new(); FeatureCategory::ALL.len()];
    for rule in &field_map.rules {
        let Some(raw) = record.raw_fields.get(&rule.field) else {
            continue;
        };
        let value = match record.cleaned_fields.get(&rule.field) {
            Some(cleaned) => cleaned.clone(),
            None => clean_text(raw),
        };
        let bucket = &mut buckets[rule.category.rank()];
        for phrase in rule.split.split(&value) {
            let lower = phrase.to_lowercase();
            if !bucket.iter().any(|p| p.to_lowercase() == lower) {
                bucket.push(phrase);
            }
        }
    }

    let features: Vec<Feature> = FeatureCategory::ALL
        .into_iter()
        .zip(buckets)
        .flat_map(|(category, phrases)| {
            phrases.into_iter().enumerate().map(move |(i, text)| Feature {
                feature_id: feature_id(category, i + 1),
                category,
                text,
            })
        })
        .collect();
    if features.is_empty() {
        return Err(ContextError::NoFeatures(record.facility_id.clone()));
    }
    Ok(features)
}

fn check_grouping(features: &[Feature]) -> Result<(), ContextError> {
    for (index, pair) in features.windows(2).enumerate() {
        if pair[1].category.rank() < pair[0].category.rank() {
            return Err(ContextError::UngroupedFeatures { index: index + 1 });
        }
    }
    Ok(())
}

fn escape_item(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        if matches!(c, ',' | '\\') {
            out.push('\\');
        }
        out.push(c);
    }
    out
}

/// Serializes grouped features. An empty list renders as the empty string.
pub fn render_context(features: &[Feature]) -> Result<String, ContextError> {
    check_grouping(features)?;
    for f in features {
        f.check()?;
    }
    let segments: Vec<String> = FeatureCategory::ALL
        .into_iter()
        .filter_map(|category| {
            let items: Vec<String> =
                features.iter().filter(|f| f.category == category).map(|f| escape_item(&f.text)).collect();
            (!items.is_empty()).then(|| format!("{}: {}", category.label(), items.join(", ")))
        })
        .collect();
    Ok(segments.join("; "))
}

/// Inverse of [`render_context`]. Ids are assigned as `slug-1`, `slug-2`, ...
/// within each category, matching [`extract_features`].
pub fn parse_context(serialized: &str) -> Result<Vec<Feature>, ContextError> {
    let syntax = |position: usize, reason: String| ContextError::ContextSyntax { position, reason };
    let mut features = Vec::new();
    if serialized.is_empty() {
        return Ok(features);
    }

    let mut last_rank: Option<usize> = None;
    let mut offset = 0;
    for (n, segment) in serialized.split(';').enumerate() {
        let seg_start = offset;
        offset += segment.len() + 1;
        let segment = if n == 0 {
            segment
        } else {
            segment.strip_prefix(' ').ok_or_else(|| syntax(seg_start, "expected a space after `;`".into()))?
        };
        let body_start = seg_start + usize::from(n > 0);
        let (label, items) =
            segment.split_once(": ").ok_or_else(|| syntax(body_start, "expected `Label: items`".into()))?;
        let category = FeatureCategory::from_label(label)
            .ok_or_else(|| syntax(body_start, format!("unknown category label `{label}`")))?;
        if last_rank.is_some_and(|r| r >= category.rank()) {
            return Err(syntax(body_start, format!("category `{label}` out of order or repeated")));
        }
        last_rank = Some(category.rank());

        let items_start = body_start + label.len() + 2;
        for (i, (pos, text)) in split_items(items).map_err(|(p, r)| syntax(items_start + p, r))?.into_iter().enumerate()
        {
            let feature = Feature { feature_id: feature_id(category, i + 1), category, text };
            feature.check().map_err(|e| syntax(items_start + pos, e.to_string()))?;
            features.push(feature);
        }
    }
    Ok(features)
}

/// Splits `a, b\, c` into unescaped items with their byte offsets.
fn split_items(items: &str) -> Result<Vec<(usize, String)>, (usize, String)> {
    let mut out = Vec::new();
    let mut current = String::new();
    let mut start = 0;
    let mut chars = items.char_indices();
    while let Some((i, c)) = chars.next() {
        match c {
            '\\' => match chars.next() {
                Some((_, e @ (',' | '\\'))) => current.push(e),
                _ => return Err((i, "dangling or unknown escape".into())),
            },
            ',' => {
                out.push((start, std::mem::take(&mut current)));
                match chars.next() {
                    Some((j, ' ')) => start = j + 1,
                    _ => return Err((i, "expected `, ` between items".into())),
                }
            }
            c => current.push(c),
        }
    }
    out.push((start, current));
    Ok(out)
}

/// A facility's features together with their serialized form.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextDocument {
    pub facility_id: String,
    pub features: Vec<Feature>,
    pub serialized: String,
}

impl ContextDocument {
    pub fn new(facility_id: impl Into<String>, features: Vec<Feature>) -> Result<Self, ContextError> {
        let mut ids = BTreeSet::new();
        for f in &features {
            if !ids.insert(f.feature_id.as_str()) {
                return Err(ContextError::DuplicateFeatureId(f.feature_id.clone()));
            }
        }
        let serialized = render_context(&features)?;
        Ok(Self { facility_id: facility_id.into(), features, serialized })
    }

    pub fn from_record(record: &FacilityRecord, field_map: &FieldMap) -> Result<Self, ContextError> {
        Self::new(record.facility_id.clone(), extract_features(record, field_map)?)
    }

    pub fn feature(&self, feature_id: &str) -> Option<&Feature> {
        self.features.iter().find(|f| f.feature_id == feature_id)
    }

    /// Re-checks every invariant, including that `serialized` is current.
    pub fn check(&self) -> Result<(), ContextError> {
        let rebuilt = Self::new(self.facility_id.clone(), self.features.clone())?;
        if rebuilt.serialized != self.serialized {
            return Err(ContextError::ContextSyntax {
                position: 0,
                reason: "serialized form does not match features".into(),
            });
        }
        Ok(())
    }
}
