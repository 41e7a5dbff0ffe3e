// SPDX-License-Identifier: Apache-2.0

//! Description quality metrics computed from annotation records.
//!
//! An annotation maps spans of a generated description either to a context
//! feature or to the hallucination marker. From that:
//!
//! * completeness = distinct linked context features / context features × 100
//! * precision = linked description features / description features × 100
//! * hallucination = hallucinated description features / description features × 100
//! * length = whitespace-separated words
//!
//! Every description feature is either correct (linked) or hallucinated, so
//! precision and hallucination sum to 100 whenever anything was annotated.

mod aggregate;
mod auto_match;

use std::collections::BTreeSet;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::context::ContextDocument;
use crate::util::percent_tenths;

pub use aggregate::{
    aggregate, aggregate_with, render_report_table, AggregateOptions, Dispersion, FacilityMetrics, MetricSummary,
    ModelReport,
};
pub use auto_match::{auto_match, AUTO_ANNOTATOR, DEFAULT_MATCH_THRESHOLD};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("invalid annotation at {pointer}: {reason}")]
    InvalidAnnotation { pointer: String, reason: String },
    #[error("unequal repetition counts: {0}")]
    MissingCells(String),
    #[error("nothing to aggregate")]
    NoFacilities,
}

/// Half-open character range `[start, end)` into a description.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        Self { start, end }
    }

    pub fn overlaps(&self, other: &Span) -> bool {
        self.start < other.end && other.start < self.end
    }

    /// The spanned text, if the span fits `text`.
    pub fn slice<'a>(&self, text: &'a str) -> Option<&'a str> {
        let mut indices = text.char_indices().map(|(i, _)| i).chain(std::iter::once(text.len()));
        let start = indices.nth(self.start)?;
        let end = if self.end == self.start { start } else { indices.nth(self.end - self.start - 1)? };
        Some(&text[start..end])
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureLink {
    /// Supported by the context feature with this id.
    Context(String),
    Hallucinated,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DescriptionFeature {
    pub span: Span,
    pub link: FeatureLink,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub run_id: String,
    pub annotator: String,
    pub description_features: Vec<DescriptionFeature>,
    pub completed_at: DateTime<Utc>,
}

impl AnnotationRecord {
    pub fn is_auto(&self) -> bool {
        self.annotator == AUTO_ANNOTATOR
    }

    /// Checks the record against the context it annotates and the description.
    pub fn validate(&self, context: &ContextDocument, description: &str) -> Result<(), EvalError> {
        let invalid = |pointer: String, reason: String| Err(EvalError::InvalidAnnotation { pointer, reason });
        if self.run_id.trim().is_empty() {
            return invalid("/run_id".into(), "empty run id".into());
        }
        if self.annotator.trim().is_empty() {
            return invalid("/annotator".into(), "empty annotator".into());
        }
        let len = description.chars().count();
        let mut linked = BTreeSet::new();
        for (i, f) in self.description_features.iter().enumerate() {
            let Span { start, end } = f.span;
            if start >= end || end > len {
                return invalid(
                    format!("/description_features/{i}/span"),
                    format!("span {start}..{end} outside description of {len} characters"),
                );
            }
            if let FeatureLink::Context(id) = &f.link {
                if context.feature(id).is_none() {
                    return invalid(
                        format!("/description_features/{i}/link"),
                        format!("feature `{id}` is not in the context"),
                    );
                }
                if !linked.insert(id.as_str()) {
                    return invalid(
                        format!("/description_features/{i}/link"),
                        format!("feature `{id}` is linked more than once"),
                    );
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct MetricCounts {
    pub total_context_features: usize,
    pub context_features_added: usize,
    pub total_features_added: usize,
    pub correct_features_added: usize,
    pub hallucinated_features: usize,
}

/// Metrics of one generated description. Percentages are unrounded; use
/// [`RunMetrics::rounded`] for display. A percentage is `None` when its
/// denominator is zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub completeness_pct: Option<f64>,
    pub precision_pct: Option<f64>,
    pub hallucination_pct: Option<f64>,
    pub length_words: usize,
    pub counts: MetricCounts,
}

impl RunMetrics {
    pub fn from_counts(counts: MetricCounts, length_words: usize) -> Self {
        let pct = |n: usize, d: usize| (d > 0).then(|| 100.0 * n as f64 / d as f64);
        Self {
            completeness_pct: pct(counts.context_features_added, counts.total_context_features),
            precision_pct: pct(counts.correct_features_added, counts.total_features_added),
            hallucination_pct: pct(counts.hallucinated_features, counts.total_features_added),
            length_words,
            counts,
        }
    }

    /// Percentages at one decimal, half-even, computed from the exact counts.
    pub fn rounded(&self) -> RunMetrics {
        let c = &self.counts;
        let pct = |n: usize, d: usize| (d > 0).then(|| percent_tenths(n as u64, d as u64));
        RunMetrics {
            completeness_pct: pct(c.context_features_added, c.total_context_features),
            precision_pct: pct(c.correct_features_added, c.total_features_added),
            hallucination_pct: pct(c.hallucinated_features, c.total_features_added),
            ..self.clone()
        }
    }

    /// Nothing annotated against a non-empty context.
    pub fn is_empty_annotation(&self) -> bool {
        self.counts.total_features_added == 0 && self.counts.total_context_features > 0
    }
}

/// Count of maximal non-whitespace runs.
pub fn word_count(description: &str) -> usize {
    description.split_whitespace().count()
}

/// Metrics for one annotated description. An annotation with no description
/// features yields completeness 0 and absent precision and hallucination.
pub fn compute_metrics(
    annotation: &AnnotationRecord,
    context: &ContextDocument,
    description: &str,
) -> Result<RunMetrics, EvalError> {
    annotation.validate(context, description)?;
    let linked = annotation.description_features.iter().filter(|f| matches!(f.link, FeatureLink::Context(_))).count();
    let hallucinated = annotation.description_features.len() - linked;
    let counts = MetricCounts {
        total_context_features: context.features.len(),
        context_features_added: linked,
        total_features_added: annotation.description_features.len(),
        correct_features_added: linked,
        hallucinated_features: hallucinated,
    };
    Ok(RunMetrics::from_counts(counts, word_count(description)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::context::{feature_id, Feature, FeatureCategory};

    fn context(n: usize) -> ContextDocument {
        let features = (1..=n)
            .map(|i| {
                Feature::new(feature_id(FeatureCategory::Services, i), FeatureCategory::Services, format!("item {i}"))
                    .unwrap()
            })
            .collect();
        ContextDocument::new("f", features).unwrap()
    }

    fn record(features: Vec<DescriptionFeature>) -> AnnotationRecord {
        AnnotationRecord {
            run_id: "r".into(),
            annotator: "alice".into(),
            description_features: features,
            completed_at: DateTime::UNIX_EPOCH,
        }
    }

    fn link(i: usize) -> DescriptionFeature {
        DescriptionFeature {
            span: Span::new(i, i + 1),
            link: FeatureLink::Context(feature_id(FeatureCategory::Services, i)),
        }
    }

    fn hallucination(i: usize) -> DescriptionFeature {
        DescriptionFeature { span: Span::new(i, i + 2), link: FeatureLink::Hallucinated }
    }

    #[test]
    fn ninety_ninety_ten() {
        let description = "x".repeat(100);
        let mut fs: Vec<_> = (1..=18).map(link).collect();
        fs.push(hallucination(40));
        fs.push(hallucination(50));
        let m = compute_metrics(&record(fs), &context(20), &description).unwrap();
        assert_eq!(m.completeness_pct, Some(90.0));
        assert_eq!(m.precision_pct, Some(90.0));
        assert_eq!(m.hallucination_pct, Some(10.0));
        assert_eq!(m.length_words, 1);
        assert_eq!(m.counts.total_features_added, 20);
    }

    #[test]
    fn perfect_run() {
        let fs: Vec<_> = (1..=5).map(link).collect();
        let m = compute_metrics(&record(fs), &context(5), "a b c d e f g").unwrap();
        assert_eq!((m.completeness_pct, m.precision_pct, m.hallucination_pct), (Some(100.0), Some(100.0), Some(0.0)));
    }

    #[test]
    fn empty_annotation_reports_absent_ratios() {
        let m = compute_metrics(&record(vec![]), &context(3), "words here").unwrap();
        assert_eq!(m.completeness_pct, Some(0.0));
        assert_eq!(m.precision_pct, None);
        assert_eq!(m.hallucination_pct, None);
        assert!(m.is_empty_annotation());
    }

    #[test]
    fn rounding_only_for_display() {
        let fs = vec![link(1), hallucination(3), hallucination(5)];
        let m = compute_metrics(&record(fs), &context(3), "0123456789").unwrap();
        assert!((m.precision_pct.unwrap() - 100.0 / 3.0).abs() < 1e-12);
        let r = m.rounded();
        assert_eq!((r.completeness_pct, r.precision_pct, r.hallucination_pct), (Some(33.3), Some(33.3), Some(66.7)));
    }

    #[test]
    fn validation_pointers() {
        let ctx = context(2);
        let bad_span = record(vec![DescriptionFeature { span: Span::new(3, 50), link: FeatureLink::Hallucinated }]);
        assert_eq!(
            compute_metrics(&bad_span, &ctx, "short"),
            Err(EvalError::InvalidAnnotation {
                pointer: "/description_features/0/span".into(),
                reason: "span 3..50 outside description of 5 characters".into()
            })
        );
        let empty_span = record(vec![DescriptionFeature { span: Span::new(2, 2), link: FeatureLink::Hallucinated }]);
        assert!(compute_metrics(&empty_span, &ctx, "short").is_err());
        let unknown =
            record(vec![DescriptionFeature { span: Span::new(0, 1), link: FeatureLink::Context("dining-9".into()) }]);
        assert!(matches!(
            compute_metrics(&unknown, &ctx, "short"),
            Err(EvalError::InvalidAnnotation { pointer, .. }) if pointer == "/description_features/0/link"
        ));
        let twice = record(vec![link(1), link(1)]);
        assert!(compute_metrics(&twice, &ctx, "short").is_err());
    }

    #[test]
    fn words() {
        assert_eq!(word_count("Rooftop pool and spa"), 4);
        assert_eq!(word_count(""), 0);
        assert_eq!(word_count("  a\n\tb  "), 2);
    }

    #[test]
    fn span_slicing_uses_chars() {
        let text = "Café pool";
        assert_eq!(Span::new(0, 4).slice(text), Some("Café"));
        assert_eq!(Span::new(5, 9).slice(text), Some("pool"));
        assert_eq!(Span::new(5, 10).slice(text), None);
    }

    #[test]
    fn link_serialization() {
        let f = link(1);
        assert_eq!(
            serde_json::to_string(&f).unwrap(),
            r#"{"span":{"start":1,"end":2},"link":{"context":"services-1"}}"#
        );
        assert_eq!(serde_json::to_string(&FeatureLink::Hallucinated).unwrap(), r#""hallucinated""#);
    }
}
