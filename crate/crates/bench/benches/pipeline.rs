// SPDX-License-Identifier: Apache-2.0

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use lodgewright_bench::{context_text, metrics_grid};
use lodgewright_core::context::{parse_context, render_context, ContextDocument};
use lodgewright_core::evaluation::{aggregate, auto_match, compute_metrics, DEFAULT_MATCH_THRESHOLD};
use lodgewright_core::ingest::clean_text;
use lodgewright_core::planner::{plan_device_map, DeviceProfile, Quantization, TransformerArchitecture};

fn context(c: &mut Criterion) {
    let text = context_text(8);
    let features = parse_context(&text).unwrap();
    c.bench_function("parse_context/48", |b| b.iter(|| parse_context(black_box(&text)).unwrap()));
    c.bench_function("render_context/48", |b| b.iter(|| render_context(black_box(&features)).unwrap()));
}

fn cleaning(c: &mut Criterion) {
    let raw = "<p>Rooftop&nbsp;pool,  <b>Spa</b></p> 2,0 KM from the old town, 10 mins walk to the beach, 500 mtrs from the station"
        .repeat(8);
    c.bench_function("clean_text", |b| b.iter(|| clean_text(black_box(&raw))));
}

fn evaluation(c: &mut Criterion) {
    let mut group = c.benchmark_group("auto_match");
    for n in [2, 8] {
        let doc = ContextDocument::new("f", parse_context(&context_text(n)).unwrap()).unwrap();
        let description = format!("A welcoming stay. {} Plus a private helipad.", doc.serialized);
        group.bench_with_input(BenchmarkId::from_parameter(doc.features.len()), &n, |b, _| {
            b.iter(|| auto_match(black_box(&doc), black_box(&description), DEFAULT_MATCH_THRESHOLD))
        });
    }
    group.finish();

    let doc = ContextDocument::new("f", parse_context(&context_text(8)).unwrap()).unwrap();
    let description = doc.serialized.clone();
    let mut record = auto_match(&doc, &description, DEFAULT_MATCH_THRESHOLD);
    record.run_id = "bench".into();
    c.bench_function("compute_metrics/48", |b| {
        b.iter(|| compute_metrics(black_box(&record), black_box(&doc), black_box(&description)).unwrap())
    });

    let grid = metrics_grid(20, 5);
    c.bench_function("aggregate/20x5", |b| b.iter(|| aggregate("m", black_box(&grid), false).unwrap()));
}

fn planning(c: &mut Criterion) {
    let layers = TransformerArchitecture::mixtral_8x7b().layer_sizes_gb(Quantization::Int8);
    let devices: Vec<DeviceProfile> = (0..2).map(|i| DeviceProfile::new(format!("cuda:{i}"), 40.0, 0.15)).collect();
    c.bench_function("plan_device_map/mixtral-int8", |b| {
        b.iter(|| plan_device_map(black_box(&layers), black_box(&devices)).unwrap())
    });
    // Greedy misses this packing, so the exact search decides.
    let tight = [5.0, 5.0, 4.0, 4.0, 3.0, 3.0, 2.0, 2.0];
    let bins: Vec<DeviceProfile> =
        [9.0, 10.0, 9.0].iter().enumerate().map(|(i, c)| DeviceProfile::new(format!("d{i}"), *c, 0.0)).collect();
    c.bench_function("plan_device_map/exact-fallback", |b| {
        b.iter(|| plan_device_map(black_box(&tight), black_box(&bins)))
    });
}

criterion_group!(benches, context, cleaning, evaluation, planning);
criterion_main!(benches);
