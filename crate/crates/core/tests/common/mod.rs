// SPDX-License-Identifier: Apache-2.0

//! Fixture loading and independent oracles shared by the integration tests.

#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::PathBuf;

use chrono::DateTime;
use lodgewright_core::context::{feature_id, ContextDocument, Feature, FeatureCategory};
use lodgewright_core::evaluation::{
    AnnotationRecord, DescriptionFeature, FacilityMetrics, FeatureLink, MetricCounts, RunMetrics, Span,
};
use lodgewright_core::generation::{ExperimentSpec, GenerationConfig};
use lodgewright_core::ingest::ProviderDescriptor;
use lodgewright_core::planner::DeviceProfile;
use lodgewright_core::Workbench;
use rand::Rng;
use serde::Deserialize;

pub fn fixture(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(rel)
}

pub fn golden(name: &str) -> String {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name);
    std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

pub fn read(rel: &str) -> String {
    std::fs::read_to_string(fixture(rel)).unwrap_or_else(|e| panic!("{rel}: {e}"))
}

pub const PROVIDERS: [(&str, &str); 3] = [
    ("providers/primary.json", "catalogs/primary.json"),
    ("providers/secondary.json", "catalogs/secondary.csv"),
    ("providers/tertiary.json", "catalogs/tertiary.html"),
];

/// Registers the three fixture providers and ingests their catalogs.
pub fn ingest_fixtures(wb: &Workbench) {
    for (descriptor, _) in PROVIDERS {
        let d: ProviderDescriptor = serde_json::from_str(&read(descriptor)).unwrap();
        wb.register_provider(d).unwrap();
    }
    for (descriptor, catalog) in PROVIDERS {
        let d: ProviderDescriptor = serde_json::from_str(&read(descriptor)).unwrap();
        wb.ingest(&d.provider_id, read(catalog).as_bytes()).unwrap();
    }
}

pub fn experiment_spec() -> ExperimentSpec {
    serde_json::from_str(&read("experiment.json")).unwrap()
}

pub fn model_configs() -> Vec<GenerationConfig> {
    experiment_spec().models
}

// ---- metrics ----

/// Random context, description and valid annotation.
pub fn random_annotation(rng: &mut impl Rng) -> (ContextDocument, String, AnnotationRecord) {
    let n = rng.random_range(1..=15);
    let features: Vec<Feature> = (1..=n)
        .map(|i| {
            Feature::new(feature_id(FeatureCategory::Services, i), FeatureCategory::Services, format!("feature {i}"))
                .unwrap()
        })
        .collect();
    let context = ContextDocument::new("f", features).unwrap();
    let words = rng.random_range(5..80);
    let description = (0..words).map(|i| format!("w{i}")).collect::<Vec<_>>().join(" ");
    let len = description.chars().count();

    let mut ids: Vec<usize> = (1..=n).collect();
    let mut out = Vec::new();
    for _ in 0..rng.random_range(0..=20) {
        let start = rng.random_range(0..len - 1);
        let end = rng.random_range(start + 1..=len);
        let link = if !ids.is_empty() && rng.random_bool(0.7) {
            let id = ids.swap_remove(rng.random_range(0..ids.len()));
            FeatureLink::Context(feature_id(FeatureCategory::Services, id))
        } else {
            FeatureLink::Hallucinated
        };
        out.push(DescriptionFeature { span: Span::new(start, end), link });
    }
    let record = AnnotationRecord {
        run_id: "run-x".into(),
        annotator: "tester".into(),
        description_features: out,
        completed_at: DateTime::UNIX_EPOCH,
    };
    (context, description, record)
}

/// Recounts link categories one by one.
pub fn recount(context: &ContextDocument, description: &str, record: &AnnotationRecord) -> RunMetrics {
    let mut linked = 0;
    let mut hallucinated = 0;
    let mut total = 0;
    for f in &record.description_features {
        total += 1;
        match &f.link {
            FeatureLink::Context(_) => linked += 1,
            FeatureLink::Hallucinated => hallucinated += 1,
        }
    }
    let words = description.split(' ').filter(|w| !w.is_empty()).count();
    let pct = |a: usize, b: usize| if b == 0 { None } else { Some(a as f64 * 100.0 / b as f64) };
    RunMetrics {
        completeness_pct: pct(linked, context.features.len()),
        precision_pct: pct(linked, total),
        hallucination_pct: pct(hallucinated, total),
        length_words: words,
        counts: MetricCounts {
            total_context_features: context.features.len(),
            context_features_added: linked,
            total_features_added: total,
            correct_features_added: linked,
            hallucinated_features: hallucinated,
        },
    }
}

// ---- aggregation ----

#[derive(Debug, Clone, Deserialize)]
pub struct FixtureRun {
    pub model_id: String,
    pub facility_id: String,
    pub repetition_index: u32,
    pub counts: MetricCounts,
    pub length_words: usize,
}

pub fn aggregation_runs() -> Vec<FixtureRun> {
    read("aggregation/runs.jsonl").lines().map(|l| serde_json::from_str(l).unwrap()).collect()
}

/// The fixture runs of one model, grouped per facility.
pub fn facility_metrics(model: &str) -> Vec<FacilityMetrics> {
    let mut by_facility: BTreeMap<String, Vec<RunMetrics>> = BTreeMap::new();
    for r in aggregation_runs().into_iter().filter(|r| r.model_id == model) {
        by_facility.entry(r.facility_id).or_default().push(RunMetrics::from_counts(r.counts, r.length_words));
    }
    by_facility.into_iter().map(|(facility_id, repetitions)| FacilityMetrics { facility_id, repetitions }).collect()
}

/// Spreadsheet-style recomputation: per-facility row averages, then column
/// mean and n-1 standard deviation.
pub fn spreadsheet(runs: &[FixtureRun], model: &str, metric: &str) -> (f64, f64) {
    let mut facilities: Vec<&str> =
        runs.iter().filter(|r| r.model_id == model).map(|r| r.facility_id.as_str()).collect();
    facilities.sort();
    facilities.dedup();
    let mut column = Vec::new();
    for f in facilities {
        let mut sum = 0.0;
        let mut n = 0.0;
        for r in runs.iter().filter(|r| r.model_id == model && r.facility_id == f) {
            let c = &r.counts;
            let v = match metric {
                "completeness" => Some(c.context_features_added as f64 / c.total_context_features as f64 * 100.0),
                "precision" if c.total_features_added > 0 => {
                    Some(c.correct_features_added as f64 / c.total_features_added as f64 * 100.0)
                }
                "hallucination" if c.total_features_added > 0 => {
                    Some(c.hallucinated_features as f64 / c.total_features_added as f64 * 100.0)
                }
                "length" => Some(r.length_words as f64),
                _ => None,
            };
            if let Some(v) = v {
                sum += v;
                n += 1.0;
            }
        }
        column.push(sum / n);
    }
    let n = column.len() as f64;
    let mean = column.iter().sum::<f64>() / n;
    let var = column.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

// ---- planner ----

/// Whether any assignment of layers to devices respects every budget.
pub fn exhaustive_feasible(layers: &[f64], devices: &[DeviceProfile]) -> bool {
    let k = devices.len();
    let total = k.pow(layers.len() as u32);
    (0..total).any(|mut code| {
        let mut loads = vec![0.0; k];
        for size in layers {
            loads[code % k] += size;
            code /= k;
        }
        loads.iter().zip(devices).all(|(l, d)| *l <= d.budget() + 1e-9)
    })
}

pub fn random_instance(rng: &mut impl Rng) -> (Vec<f64>, Vec<DeviceProfile>) {
    let layers: Vec<f64> = (0..rng.random_range(1..=8)).map(|_| rng.random_range(0.5..8.0)).collect();
    let devices = (0..rng.random_range(1..=3))
        .map(|i| DeviceProfile::new(format!("cuda:{i}"), rng.random_range(4.0..24.0), rng.random_range(0.0..0.4)))
        .collect();
    (layers, devices)
}

// ---- contexts ----

const WORDS: &[&str] = &[
    "pool",
    "spa",
    "Wi-Fi",
    "2 km",
    "from",
    "the",
    "Café",
    "rooftop",
    "a\\b",
    "x,y",
    "garden",
    "10-minute walk",
    "suites",
    "über",
    "東京",
    "bar",
];

pub fn random_context(rng: &mut impl Rng) -> ContextDocument {
    let mut features = Vec::new();
    for category in FeatureCategory::ALL {
        if rng.random_bool(0.4) {
            continue;
        }
        for i in 1..=rng.random_range(1..=5) {
            let words = rng.random_range(1..=4);
            let text = (0..words).map(|_| WORDS[rng.random_range(0..WORDS.len())]).collect::<Vec<_>>().join(" ");
            features.push(Feature::new(feature_id(category, i), category, text).unwrap());
        }
    }
    if features.is_empty() {
        features.push(Feature::new(feature_id(FeatureCategory::Rooms, 1), FeatureCategory::Rooms, "30 rooms").unwrap());
    }
    ContextDocument::new("f", features).unwrap()
}
