// SPDX-License-Identifier: Apache-2.0

//! The three catalog wire formats.
//!
//! * `structured-json`: `{"facilities": [{"id", "name", "city", "fields": {..}}]}`
//! * `delimited-table`: RFC 4180 CSV with a header row; `id`, `name` and `city`
//!   columns are required, every other column is a raw field.
//! * `html-fragments`: a sequence of
//!   `<facility id=".." name=".." city=".."><field name="..">markup</field>...</facility>`
//!   elements. Field bodies are kept verbatim; cleaning happens later.
//!
//! Blank values are dropped in every format.

use std::collections::{BTreeMap, BTreeSet};

use serde::Deserialize;
use serde_json::value::RawValue;

use super::{CatalogFormat, FacilityRecord, IngestError, ProviderDescriptor};

/// Parses one provider payload into uncleaned records, one per entry.
pub fn parse_catalog(payload: &[u8], descriptor: &ProviderDescriptor) -> Result<Vec<FacilityRecord>, IngestError> {
    descriptor.validate()?;
    let text = std::str::from_utf8(payload).map_err(|e| IngestError::MalformedCatalog {
        offset: e.valid_up_to(),
        reason: "payload is not valid UTF-8".into(),
    })?;
    let entries = match descriptor.format {
        CatalogFormat::StructuredJson => parse_json(text)?,
        CatalogFormat::DelimitedTable => parse_table(text)?,
        CatalogFormat::HtmlFragments => parse_fragments(text)?,
    };
    if entries.is_empty() {
        return Err(IngestError::EmptyCatalog);
    }

    let mut seen = BTreeSet::new();
    let mut records = Vec::with_capacity(entries.len());
    for entry in entries {
        let malformed = |reason: String| IngestError::MalformedCatalog { offset: entry.offset, reason };
        if entry.id.trim().is_empty() {
            return Err(malformed("facility id is empty".into()));
        }
        if entry.name.trim().is_empty() {
            return Err(malformed(format!("facility `{}` has no name", entry.id)));
        }
        if !seen.insert(entry.id.clone()) {
            return Err(malformed(format!("duplicate facility id `{}`", entry.id)));
        }
        records.push(FacilityRecord {
            facility_id: entry.id,
            name: entry.name,
            city: entry.city,
            provider_id: descriptor.provider_id.clone(),
            raw_fields: entry.fields.into_iter().filter(|(_, v)| !v.trim().is_empty()).collect(),
            cleaned_fields: BTreeMap::new(),
        });
    }
    Ok(records)
}

struct Entry {
    offset: usize,
    id: String,
    name: String,
    city: String,
    fields: BTreeMap<String, String>,
}

fn line_col_to_offset(text: &str, line: usize, column: usize) -> usize {
    if line == 0 {
        return 0;
    }
    let line_start: usize = text.split_inclusive('\n').take(line - 1).map(str::len).sum();
    (line_start + column.saturating_sub(1)).min(text.len())
}

fn parse_json(text: &str) -> Result<Vec<Entry>, IngestError> {
    #[derive(Deserialize)]
    struct Document<'a> {
        #[serde(borrow)]
        facilities: Vec<&'a RawValue>,
    }
    #[derive(Deserialize)]
    struct JsonEntry {
        id: String,
        name: String,
        #[serde(default)]
        city: String,
        #[serde(default)]
        fields: BTreeMap<String, String>,
    }

    let doc: Document = serde_json::from_str(text).map_err(|e| IngestError::MalformedCatalog {
        offset: line_col_to_offset(text, e.line(), e.column()),
        reason: e.to_string(),
    })?;
    doc.facilities
        .into_iter()
        .map(|raw| {
            let slice = raw.get();
            let offset = slice.as_ptr() as usize - text.as_ptr() as usize;
            let e: JsonEntry = serde_json::from_str(slice).map_err(|e| IngestError::MalformedCatalog {
                offset: offset + line_col_to_offset(slice, e.line(), e.column()),
                reason: e.to_string(),
            })?;
            Ok(Entry { offset, id: e.id, name: e.name, city: e.city, fields: e.fields })
        })
        .collect()
}

fn parse_table(text: &str) -> Result<Vec<Entry>, IngestError> {
    let csv_error = |e: csv::Error| IngestError::MalformedCatalog {
        offset: e.position().map_or(0, |p| p.byte() as usize),
        reason: e.to_string(),
    };
    let mut reader = csv::ReaderBuilder::new().has_headers(true).flexible(false).from_reader(text.as_bytes());
    let headers = reader.headers().map_err(csv_error)?.clone();
    let column = |name: &str| {
        headers.iter().position(|h| h.trim() == name).ok_or_else(|| IngestError::MalformedCatalog {
            offset: 0,
            reason: format!("header row lacks required column `{name}`"),
        })
    };
    let (id_col, name_col, city_col) = (column("id")?, column("name")?, column("city")?);

    let mut entries = Vec::new();
    for row in reader.records() {
        let row = row.map_err(csv_error)?;
        let offset = row.position().map_or(0, |p| p.byte() as usize);
        let fields = headers
            .iter()
            .zip(row.iter())
            .enumerate()
            .filter(|(i, _)| ![id_col, name_col, city_col].contains(i))
            .map(|(_, (h, v))| (h.trim().to_owned(), v.to_owned()))
            .collect();
        entries.push(Entry {
            offset,
            id: row[id_col].trim().to_owned(),
            name: row[name_col].trim().to_owned(),
            city: row[city_col].trim().to_owned(),
            fields,
        });
    }
    Ok(entries)
}

/// Cursor over an html-fragments payload.
struct Fragments<'a> {
    text: &'a str,
    pos: usize,
}

impl<'a> Fragments<'a> {
    fn error(&self, reason: impl Into<String>) -> IngestError {
        IngestError::MalformedCatalog { offset: self.pos, reason: reason.into() }
    }

    fn rest(&self) -> &'a str {
        &self.text[self.pos..]
    }

    fn skip_filler(&mut self) {
        loop {
            let trimmed = self.rest().trim_start();
            self.pos = self.text.len() - trimmed.len();
            if trimmed.starts_with("<!--") {
                match trimmed.find("-->") {
                    Some(end) => self.pos += end + 3,
                    None => return,
                }
            } else {
                return;
            }
        }
    }

    fn eat(&mut self, token: &str) -> bool {
        if self.rest().starts_with(token) {
            self.pos += token.len();
            true
        } else {
            false
        }
    }

    /// Parses `name="value"` pairs up to and including the closing `>`.
    fn attributes(&mut self) -> Result<BTreeMap<String, String>, IngestError> {
        let mut attrs = BTreeMap::new();
        loop {
            self.skip_filler();
            if self.eat(">") {
                return Ok(attrs);
            }
            let rest = self.rest();
            let name_len =
                rest.find(|c: char| !(c.is_ascii_alphanumeric() || c == '-' || c == '_')).unwrap_or(rest.len());
            if name_len == 0 {
                return Err(self.error("expected attribute name or `>`"));
            }
            let name = rest[..name_len].to_ascii_lowercase();
            self.pos += name_len;
            if !self.eat("=\"") {
                return Err(self.error(format!("attribute `{name}` must be written as {name}=\"...\"")));
            }
            let Some(end) = self.rest().find('"') else {
                return Err(self.error(format!("unterminated value for attribute `{name}`")));
            };
            let value = html_escape::decode_html_entities(&self.rest()[..end]).into_owned();
            self.pos += end + 1;
            if attrs.insert(name.clone(), value).is_some() {
                return Err(self.error(format!("attribute `{name}` repeated")));
            }
        }
    }
}

fn parse_fragments(text: &str) -> Result<Vec<Entry>, IngestError> {
    let mut cur = Fragments { text, pos: 0 };
    let mut entries = Vec::new();
    loop {
        cur.skip_filler();
        if cur.rest().is_empty() {
            return Ok(entries);
        }
        let offset = cur.pos;
        if !cur.eat("<facility") {
            return Err(cur.error("expected `<facility`"));
        }
        let mut attrs = cur.attributes()?;
        let mut take = |key: &str| attrs.remove(key);
        let id = take("id").ok_or_else(|| cur.error("facility lacks an `id` attribute"))?;
        let name = take("name").ok_or_else(|| cur.error("facility lacks a `name` attribute"))?;
        let city = take("city").unwrap_or_default();

        let mut fields = BTreeMap::new();
        loop {
            cur.skip_filler();
            if cur.eat("</facility>") {
                break;
            }
            if !cur.eat("<field") {
                return Err(cur.error("expected `<field` or `</facility>`"));
            }
            let mut field_attrs = cur.attributes()?;
            let field_name = field_attrs.remove("name").ok_or_else(|| cur.error("field lacks a `name` attribute"))?;
            let Some(end) = cur.rest().find("</field>") else {
                return Err(cur.error(format!("field `{field_name}` is not closed")));
            };
            let body = cur.rest()[..end].to_owned();
            cur.pos += end + "</field>".len();
            if fields.insert(field_name.clone(), body).is_some() {
                return Err(cur.error(format!("field `{field_name}` repeated in facility `{id}`")));
            }
        }
        entries.push(Entry { offset, id, name, city, fields });
    }
}
