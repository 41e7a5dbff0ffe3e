// SPDX-License-Identifier: Apache-2.0

//! Inputs shared by the benchmarks.

use lodgewright_core::evaluation::{FacilityMetrics, MetricCounts, RunMetrics};

/// Context text with `n` features per category.
pub fn context_text(n: usize) -> String {
    let labels = ["Recreation", "Services", "Dining", "Rooms", "Additional Services", "Nearby POIs"];
    labels
        .iter()
        .enumerate()
        .map(|(c, label)| {
            let items: Vec<String> = (0..n).map(|i| format!("Item {c} number {i} with garden view")).collect();
            format!("{label}: {}", items.join(", "))
        })
        .collect::<Vec<_>>()
        .join("; ")
}

/// `facilities` × `repetitions` grid with deterministic counts.
pub fn metrics_grid(facilities: usize, repetitions: usize) -> Vec<FacilityMetrics> {
    (0..facilities)
        .map(|f| FacilityMetrics {
            facility_id: format!("f{f:03}"),
            repetitions: (0..repetitions)
                .map(|r| {
                    let total = 10 + (f * 7 + r) % 11;
                    let added = total - (f + r) % 4;
                    let halluc = (f * 3 + r) % 3;
                    RunMetrics::from_counts(
                        MetricCounts {
                            total_context_features: total,
                            context_features_added: added,
                            total_features_added: added + halluc,
                            correct_features_added: added,
                            hallucinated_features: halluc,
                        },
                        200 + (f * 13 + r * 7) % 120,
                    )
                })
                .collect(),
        })
        .collect()
}
