// SPDX-License-Identifier: Apache-2.0

//! Per-model aggregation over facilities and repetitions.

use serde::{Deserialize, Serialize};

use super::{EvalError, RunMetrics};
use crate::util::round_half_even;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FacilityMetrics {
    pub facility_id: String,
    pub repetitions: Vec<RunMetrics>,
}

/// Divisor used for the standard deviation across facilities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dispersion {
    /// n - 1
    #[default]
    Sample,
    /// n
    Population,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct AggregateOptions {
    pub allow_unequal: bool,
    pub dispersion: Dispersion,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub mean: f64,
    /// Standard deviation across facility means.
    pub std_dev: f64,
    pub facilities: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelReport {
    pub model_id: String,
    pub completeness: Option<MetricSummary>,
    pub precision: Option<MetricSummary>,
    pub length: Option<MetricSummary>,
    pub hallucination: Option<MetricSummary>,
    pub facilities: usize,
    pub runs: usize,
    pub facility_breakdown: Vec<FacilityMetrics>,
}

fn summarize(facility_means: &[f64], dispersion: Dispersion) -> Option<MetricSummary> {
    let n = facility_means.len();
    if n == 0 {
        return None;
    }
    let mean = facility_means.iter().sum::<f64>() / n as f64;
    let divisor = match dispersion {
        Dispersion::Sample => n - 1,
        Dispersion::Population => n,
    };
    let std_dev = if n < 2 {
        0.0
    } else {
        (facility_means.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / divisor as f64).sqrt()
    };
    Some(MetricSummary { mean, std_dev, facilities: n })
}

/// Mean over a facility's repetitions, skipping runs where the metric is
/// undefined. `None` when no repetition defines it.
fn facility_mean(reps: &[RunMetrics], pick: impl Fn(&RunMetrics) -> Option<f64>) -> Option<f64> {
    let values: Vec<f64> = reps.iter().filter_map(pick).collect();
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

/// Averages repetitions within each facility, then reports the mean and sample
/// standard deviation of those facility means. Facilities are processed in id
/// order, so the result does not depend on input order. Unequal repetition
/// counts are rejected unless `allow_unequal` is set.
pub fn aggregate(
    model_id: &str,
    facilities: &[FacilityMetrics],
    allow_unequal: bool,
) -> Result<ModelReport, EvalError> {
    aggregate_with(model_id, facilities, AggregateOptions { allow_unequal, dispersion: Dispersion::Sample })
}

pub fn aggregate_with(
    model_id: &str,
    facilities: &[FacilityMetrics],
    options: AggregateOptions,
) -> Result<ModelReport, EvalError> {
    let allow_unequal = options.allow_unequal;
    let mut sorted: Vec<FacilityMetrics> = facilities.iter().filter(|f| !f.repetitions.is_empty()).cloned().collect();
    if sorted.is_empty() {
        return Err(EvalError::NoFacilities);
    }
    sorted.sort_by(|a, b| a.facility_id.cmp(&b.facility_id));
    if let Some(w) = sorted.windows(2).find(|w| w[0].facility_id == w[1].facility_id) {
        return Err(EvalError::MissingCells(format!("facility `{}` listed twice", w[0].facility_id)));
    }
    let expected = sorted[0].repetitions.len();
    if !allow_unequal {
        if let Some(f) = sorted.iter().find(|f| f.repetitions.len() != expected) {
            return Err(EvalError::MissingCells(format!(
                "facility `{}` has {} repetitions, `{}` has {}",
                f.facility_id,
                f.repetitions.len(),
                sorted[0].facility_id,
                expected
            )));
        }
    }
    if facilities.len() != sorted.len() && !allow_unequal {
        return Err(EvalError::MissingCells("a facility has no runs".into()));
    }

    let column = |pick: &dyn Fn(&RunMetrics) -> Option<f64>| {
        let means: Vec<f64> = sorted.iter().filter_map(|f| facility_mean(&f.repetitions, pick)).collect();
        summarize(&means, options.dispersion)
    };
    Ok(ModelReport {
        model_id: model_id.to_owned(),
        completeness: column(&|m| m.completeness_pct),
        precision: column(&|m| m.precision_pct),
        length: column(&|m| Some(m.length_words as f64)),
        hallucination: column(&|m| m.hallucination_pct),
        facilities: sorted.len(),
        runs: sorted.iter().map(|f| f.repetitions.len()).sum(),
        facility_breakdown: sorted,
    })
}

const HEADERS: [&str; 5] = ["Model", "Completeness", "Precision", "Length", "Hallucinations"];

fn cell(summary: Option<MetricSummary>, unit: &str) -> String {
    match summary {
        None => "n/a".into(),
        Some(s) => {
            format!("({:.1}{unit} \u{2013} {:.1}{unit})", round_half_even(s.mean, 1), round_half_even(s.std_dev, 1))
        }
    }
}

/// Plain-text table with one row per model: `(mean – sd)` cells, one decimal.
pub fn render_report_table(reports: &[ModelReport]) -> String {
    let rows: Vec<[String; 5]> = reports
        .iter()
        .map(|r| {
            [
                r.model_id.clone(),
                cell(r.completeness, "%"),
                cell(r.precision, "%"),
                cell(r.length, ""),
                cell(r.hallucination, "%"),
            ]
        })
        .collect();
    let mut widths = HEADERS.map(|h| h.chars().count());
    for row in &rows {
        for (w, c) in widths.iter_mut().zip(row) {
            *w = (*w).max(c.chars().count());
        }
    }
    let line = |cells: &[String]| {
        let padded: Vec<String> = cells.iter().zip(widths).map(|(c, w)| format!("{c:<w$}")).collect();
        padded.join(" | ").trim_end().to_owned() + "\n"
    };
    let mut out = line(&HEADERS.map(String::from));
    out += &(widths.map(|w| "-".repeat(w)).join("-|-") + "\n");
    for row in &rows {
        out += &line(row);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluation::MetricCounts;

    fn run(complete: usize, of: usize, correct: usize, added: usize, words: usize) -> RunMetrics {
        RunMetrics::from_counts(
            MetricCounts {
                total_context_features: of,
                context_features_added: complete,
                total_features_added: added,
                correct_features_added: correct,
                hallucinated_features: added - correct,
            },
            words,
        )
    }

    fn facility(id: &str, reps: Vec<RunMetrics>) -> FacilityMetrics {
        FacilityMetrics { facility_id: id.into(), repetitions: reps }
    }

    #[test]
    fn mean_of_facility_means() {
        let fs = vec![
            facility("a", vec![run(10, 10, 10, 10, 100), run(5, 10, 5, 10, 200)]),
            facility("b", vec![run(10, 10, 9, 10, 300), run(10, 10, 9, 10, 300)]),
        ];
        let r = aggregate("m", &fs, false).unwrap();
        let c = r.completeness.unwrap();
        assert!((c.mean - 87.5).abs() < 1e-12);
        assert!((c.std_dev - (2.0f64 * 12.5 * 12.5).sqrt()).abs() < 1e-12);
        assert_eq!(r.length.unwrap().mean, 225.0);
        assert_eq!((r.facilities, r.runs), (2, 4));
    }

    #[test]
    fn unequal_repetitions() {
        let fs =
            vec![facility("a", vec![run(1, 1, 1, 1, 1)]), facility("b", vec![run(1, 1, 1, 1, 1), run(1, 1, 1, 1, 1)])];
        assert!(matches!(aggregate("m", &fs, false), Err(EvalError::MissingCells(_))));
        assert_eq!(aggregate("m", &fs, true).unwrap().runs, 3);
        assert_eq!(aggregate("m", &[], false), Err(EvalError::NoFacilities));
    }

    #[test]
    fn undefined_ratios_are_skipped() {
        let fs = vec![facility("a", vec![run(0, 4, 0, 0, 10), run(4, 4, 3, 4, 10)])];
        let r = aggregate("m", &fs, false).unwrap();
        assert_eq!(r.precision.unwrap().mean, 75.0);
        assert_eq!(r.completeness.unwrap().mean, 50.0);
    }

    #[test]
    fn table_layout() {
        let r = ModelReport {
            model_id: "mistral-7b-ft".into(),
            completeness: Some(MetricSummary { mean: 92.9, std_dev: 8.84, facilities: 20 }),
            precision: Some(MetricSummary { mean: 96.0, std_dev: 3.2, facilities: 20 }),
            length: Some(MetricSummary { mean: 277.0, std_dev: 70.0, facilities: 20 }),
            hallucination: None,
            facilities: 20,
            runs: 100,
            facility_breakdown: vec![],
        };
        assert_eq!(
            render_report_table(&[r]),
            "Model         | Completeness   | Precision      | Length         | Hallucinations\n\
             --------------|----------------|----------------|----------------|---------------\n\
             mistral-7b-ft | (92.9% \u{2013} 8.8%) | (96.0% \u{2013} 3.2%) | (277.0 \u{2013} 70.0) | n/a\n"
        );
    }
}
