// SPDX-License-Identifier: Apache-2.0

mod common;

use std::collections::BTreeMap;

use common::{fixture, read};
use lodgewright_core::context::{ContextDocument, FieldMap};
use lodgewright_core::ingest::{
    clean_text, contains_tag, group_by_identity, merge_providers, parse_catalog, CatalogFormat, FacilityRecord,
    ProviderDescriptor,
};
use lodgewright_core::Workbench;
use proptest::prelude::*;
use regex::Regex;
use serde::Deserialize;

fn descriptor(rel: &str) -> ProviderDescriptor {
    serde_json::from_str(&read(rel)).unwrap()
}

#[test]
fn test_catalog_yields_twenty_records() {
    let mut d = descriptor("providers/primary.json");
    d.provider_id = "test".into();
    let records = parse_catalog(read("catalogs/test20.json").as_bytes(), &d).unwrap();
    assert_eq!(records.len(), 20);
    assert!(records.iter().all(|r| r.provider_id == "test"));
}

#[test]
fn each_fixture_format_parses() {
    let cases = [
        ("providers/primary.json", "catalogs/primary.json", 30),
        ("providers/secondary.json", "catalogs/secondary.csv", 14),
        ("providers/tertiary.json", "catalogs/tertiary.html", 9),
    ];
    for (d, c, n) in cases {
        let records = parse_catalog(read(c).as_bytes(), &descriptor(d)).unwrap();
        assert_eq!(records.len(), n, "{c}");
        for r in records {
            let cleaned = r.cleaned();
            assert!(cleaned.cleaned_fields.values().all(|v| !contains_tag(v)), "{c}");
        }
    }
}

#[derive(Deserialize)]
struct UnitCase {
    raw: String,
    expected: String,
}

/// One regex per spelling, applied after a naive tag and entity strip.
fn unit_oracle(raw: &str) -> String {
    let mut s = Regex::new(r"<[^>]+>").unwrap().replace_all(raw, "").into_owned();
    s = s.replace("&nbsp;", " ").replace("&amp;", "&");
    s = s.split_whitespace().collect::<Vec<_>>().join(" ");
    let number = |n: &str| {
        let n = match n.split_once(',') {
            Some((a, b)) if b.len() == 3 => format!("{a}{b}"),
            Some((a, b)) => format!("{a}.{b}"),
            None => n.to_owned(),
        };
        let n = if n.contains('.') { n.trim_end_matches('0').trim_end_matches('.').to_owned() } else { n };
        let t = n.trim_start_matches('0');
        if t.is_empty() || t.starts_with('.') {
            format!("0{t}")
        } else {
            t.to_owned()
        }
    };
    for alias in ["kilometres", "kilometre", "kilometers", "kilometer", "kms", "km"] {
        let re = Regex::new(&format!(r"(?i)\b(\d+(?:[.,]\d+)?)\s*{alias}\b")).unwrap();
        s = re.replace_all(&s, |c: &regex::Captures| format!("{} km", number(&c[1]))).into_owned();
    }
    for alias in ["metres", "metre", "meters", "meter", "mtrs", "mtr", "mt", "m"] {
        let re = Regex::new(&format!(r"(?i)\b(\d+(?:[.,]\d+)?)\s*({alias})\b(\s+walk|\s+drive|\s+ride)?")).unwrap();
        s = re
            .replace_all(&s, |c: &regex::Captures| {
                if &c[2] == "M" || (&c[2] == "m" && c.get(3).is_some()) {
                    return c[0].to_owned();
                }
                format!("{} meters{}", number(&c[1]), c.get(3).map_or("", |m| m.as_str()))
            })
            .into_owned();
    }
    for trip in ["walk", "drive", "ride", "journey", "transfer"] {
        for alias in ["minutes", "minute", "mins", "min"] {
            let re = Regex::new(&format!(r"(?i)\b(\d+)\s*-?\s*{alias}\.?(\s*-\s*|\s+){trip}\b")).unwrap();
            s = re.replace_all(&s, |c: &regex::Captures| format!("{}-minute {trip}", number(&c[1]))).into_owned();
        }
    }
    for alias in ["minutes", "minute", "mins", "min"] {
        let re = Regex::new(&format!(r"(?i)\b(\d+)\s*{alias}\b")).unwrap();
        s = re
            .replace_all(&s, |c: &regex::Captures| match number(&c[1]).as_str() {
                "1" => "1 minute".to_owned(),
                n => format!("{n} minutes"),
            })
            .into_owned();
    }
    s
}

#[test]
fn unit_canonicalization_fixture() {
    let cases: Vec<UnitCase> = serde_json::from_str(&read("units.json")).unwrap();
    assert_eq!(cases.len(), 50);
    for c in &cases {
        assert_eq!(clean_text(&c.raw), c.expected, "clean_text({:?})", c.raw);
        assert_eq!(unit_oracle(&c.raw), c.expected, "oracle({:?})", c.raw);
    }
}

#[test]
fn three_provider_merge_fills_gaps() {
    let dir = tempfile::tempdir().unwrap();
    let wb = Workbench::open(dir.path()).unwrap();
    common::ingest_fixtures(&wb);
    let facilities = wb.facilities();
    assert_eq!(facilities.len(), 30);
    // Primary entries without POIs pick them up from the secondary catalog.
    let primary: serde_json::Value = serde_json::from_str(&read("catalogs/primary.json")).unwrap();
    let gaps: Vec<&str> = primary["facilities"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|f| f["fields"].get("pois").is_none())
        .map(|f| f["id"].as_str().unwrap())
        .collect();
    assert!(!gaps.is_empty());
    let mut filled = 0;
    for m in &facilities {
        if gaps.contains(&m.record.facility_id.as_str()) {
            if let Some(p) = m.provenance.get("pois") {
                assert_ne!(p, "primary");
                filled += 1;
            }
        } else {
            assert_eq!(m.provenance.get("pois").map(String::as_str), Some("primary"));
        }
        assert_eq!(m.provenance.get("amenities").map(String::as_str), Some("primary"));
    }
    assert!(filled > 0);
    assert!(wb.contexts().iter().all(|c| c.check().is_ok()));
}

#[test]
fn reingesting_is_idempotent() {
    let dir = tempfile::tempdir().unwrap();
    let wb = Workbench::open(dir.path()).unwrap();
    common::ingest_fixtures(&wb);
    let before = wb.contexts();
    wb.ingest("secondary", read("catalogs/secondary.csv").as_bytes()).unwrap();
    assert_eq!(wb.contexts(), before);
    let reopened = Workbench::open(dir.path()).unwrap();
    assert_eq!(reopened.contexts(), before);
}

#[test]
fn fixture_paths_exist() {
    for rel in ["catalogs/test20.json", "experiment.json", "aggregation/runs.jsonl"] {
        assert!(fixture(rel).exists(), "{rel}");
    }
}

fn provider(id: &str, priority: u32) -> ProviderDescriptor {
    ProviderDescriptor {
        provider_id: id.into(),
        priority,
        format: CatalogFormat::StructuredJson,
        field_map: Default::default(),
        reference_field: None,
    }
}

const FIELDS: [&str; 4] = ["amenities", "dining", "pois", "rooms"];

fn arb_record(provider: &'static str) -> impl Strategy<Value = FacilityRecord> {
    prop::collection::vec(
        prop::option::of(prop::sample::select(vec!["", "   ", "<b></b>", "Pool", "Bar, Spa", "2 km"])),
        4,
    )
    .prop_map(move |values| {
        let raw_fields: BTreeMap<String, String> =
            FIELDS.iter().zip(values).filter_map(|(f, v)| v.map(|v| (f.to_string(), v.to_string()))).collect();
        FacilityRecord {
            facility_id: format!("{provider}-1"),
            name: "Hotel Mirador".into(),
            city: "Seville".into(),
            provider_id: provider.into(),
            raw_fields,
            cleaned_fields: BTreeMap::new(),
        }
        .cleaned()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn merge_provenance_matches_brute_force(a in arb_record("a"), b in arb_record("b"), c in arb_record("c")) {
        let descriptors = vec![provider("a", 1), provider("b", 2), provider("c", 3)];
        let records = vec![c.clone(), a.clone(), b.clone()];
        let merged = merge_providers(&records, &descriptors).unwrap();
        for field in FIELDS {
            let expected = [&a, &b, &c]
                .into_iter()
                .find(|r| r.cleaned_fields.get(field).is_some_and(|v| !v.is_empty()));
            match expected {
                Some(r) => {
                    prop_assert_eq!(merged.provenance.get(field), Some(&r.provider_id));
                    prop_assert_eq!(merged.record.raw_fields.get(field), r.raw_fields.get(field));
                }
                None => prop_assert!(!merged.provenance.contains_key(field)),
            }
        }
        let groups = group_by_identity(records.iter());
        prop_assert_eq!(groups.len(), 1);
    }

    #[test]
    fn clean_text_is_idempotent(s in "(<[a-z]{1,4}>|</[a-z]{1,4}>|&[a-z]{2,4};|&lt;b&gt;|[0-9]{1,3}(,[0-9])? ?(km|KM|m|mtrs|min|mins)|[ \\ta-zA-Z,.-]{0,12}){0,12}") {
        let once = clean_text(&s);
        prop_assert_eq!(clean_text(&once), once.clone());
        prop_assert!(!contains_tag(&once));
    }

    #[test]
    fn feature_count_matches_brute_force_splitter(values in prop::collection::vec("[a-z]{0,6}( [a-z]{1,6})?", 0..6)) {
        let raw = values.join(", ");
        let record = FacilityRecord {
            facility_id: "f".into(),
            name: "n".into(),
            city: "c".into(),
            provider_id: "p".into(),
            raw_fields: [("amenities".to_string(), raw.clone())].into_iter().collect(),
            cleaned_fields: BTreeMap::new(),
        }
        .cleaned();
        let mut seen = Vec::new();
        for piece in clean_text(&raw).split(',') {
            let piece = piece.trim().to_lowercase();
            if !piece.is_empty() && !seen.contains(&piece) {
                seen.push(piece);
            }
        }
        match ContextDocument::from_record(&record, &FieldMap::shipped()) {
            Ok(doc) => prop_assert_eq!(doc.features.len(), seen.len()),
            Err(_) => prop_assert!(seen.is_empty()),
        }
    }
}
