// SPDX-License-Identifier: Apache-2.0

//! Lexical auto-annotation used as a bootstrap for human review.
//!
//! Each context feature is matched to the description window that covers the
//! largest share of its content tokens. Sentences that carry no match but look
//! factual (a number or an amenity noun) are marked as hallucinated.

use std::collections::BTreeSet;

use chrono::DateTime;

use super::{AnnotationRecord, DescriptionFeature, FeatureLink, Span};
use crate::context::ContextDocument;

pub const AUTO_ANNOTATOR: &str = "auto";
pub const DEFAULT_MATCH_THRESHOLD: f64 = 0.6;

/// Extra content tokens a window may hold beyond the feature's own.
const WINDOW_SLACK: usize = 2;

const STOPWORDS: &[&str] = &[
    "a", "all", "an", "and", "are", "at", "by", "each", "for", "from", "in", "is", "its", "of", "on", "or", "our",
    "the", "to", "with",
];

const AMENITY_LEXICON: &[&str] = &[
    "airport",
    "balcony",
    "bar",
    "beach",
    "breakfast",
    "buffet",
    "cafe",
    "concierge",
    "elevator",
    "fitnes",
    "garage",
    "garden",
    "golf",
    "gym",
    "hammam",
    "jacuzzi",
    "kitchen",
    "km",
    "laundry",
    "lounge",
    "massage",
    "meter",
    "minibar",
    "minute",
    "museum",
    "parking",
    "playground",
    "pool",
    "reception",
    "restaurant",
    "room",
    "rooftop",
    "sauna",
    "shuttle",
    "spa",
    "station",
    "suite",
    "tenni",
    "terrace",
    "transfer",
    "wifi",
    "wi",
];

#[derive(Debug, Clone)]
struct Token {
    norm: String,
    start: usize,
    end: usize,
}

/// Lowercased alphanumeric runs with char offsets. A trailing plural `s` is
/// dropped from words longer than three characters.
fn tokenize(text: &str) -> Vec<Token> {
    let mut out = Vec::new();
    let mut current = String::new();
    let mut start = 0;
    for (i, c) in text.chars().chain(std::iter::once(' ')).enumerate() {
        if c.is_alphanumeric() {
            if current.is_empty() {
                start = i;
            }
            current.extend(c.to_lowercase());
        } else if !current.is_empty() {
            let mut norm = std::mem::take(&mut current);
            if norm.chars().count() > 3 && norm.ends_with('s') && !norm.ends_with("ss") {
                norm.pop();
            }
            out.push(Token { norm, start, end: i });
        }
    }
    out
}

fn content_tokens(text: &str) -> Vec<String> {
    let all: Vec<String> = tokenize(text).into_iter().map(|t| t.norm).collect();
    let content: Vec<String> = all.iter().filter(|t| !STOPWORDS.contains(&t.as_str())).cloned().collect();
    let mut seen = BTreeSet::new();
    let chosen = if content.is_empty() { all } else { content };
    chosen.into_iter().filter(|t| seen.insert(t.clone())).collect()
}

/// Best window for `wanted`: highest coverage, then shortest, then earliest.
fn best_window(tokens: &[Token], wanted: &[String]) -> Option<(f64, usize, usize)> {
    if wanted.is_empty() {
        return None;
    }
    let max_len = wanted.len() + WINDOW_SLACK;
    let mut best: Option<(f64, usize, usize)> = None;
    for s in 0..tokens.len() {
        if !wanted.contains(&tokens[s].norm) {
            continue;
        }
        let mut covered = BTreeSet::new();
        let mut width = 0;
        for (e, token) in tokens.iter().enumerate().skip(s) {
            if !STOPWORDS.contains(&token.norm.as_str()) {
                width += 1;
            }
            if width > max_len {
                break;
            }
            if wanted.contains(&token.norm) {
                covered.insert(token.norm.as_str());
            } else {
                continue;
            }
            let score = covered.len() as f64 / wanted.len() as f64;
            let better = match best {
                None => true,
                Some((bs, b0, b1)) => score > bs + 1e-12 || ((score - bs).abs() <= 1e-12 && e - s < b1 - b0),
            };
            if better {
                best = Some((score, s, e));
            }
        }
    }
    best
}

/// Sentence spans in chars, split after `.`, `!`, `?` or `;` followed by
/// whitespace, and at newlines.
fn sentences(text: &str) -> Vec<Span> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut start = 0;
    let push = |out: &mut Vec<Span>, s: usize, e: usize| {
        let mut s = s;
        let mut e = e;
        while s < e && chars[s].is_whitespace() {
            s += 1;
        }
        while e > s && chars[e - 1].is_whitespace() {
            e -= 1;
        }
        if s < e {
            out.push(Span::new(s, e));
        }
    };
    for i in 0..chars.len() {
        let c = chars[i];
        let next_blank = chars.get(i + 1).is_none_or(|n| n.is_whitespace());
        if c == '\n' || (matches!(c, '.' | '!' | '?' | ';') && next_blank) {
            push(&mut out, start, i + 1);
            start = i + 1;
        }
    }
    push(&mut out, start, chars.len());
    out
}

fn looks_factual(tokens: &[Token]) -> bool {
    tokens.iter().any(|t| t.norm.chars().any(|c| c.is_ascii_digit()) || AMENITY_LEXICON.contains(&t.norm.as_str()))
}

/// Annotates `description` against `context`. The returned record has an
/// empty `run_id` and the epoch as `completed_at` so that identical inputs
/// give identical records; callers stamp both when storing.
pub fn auto_match(context: &ContextDocument, description: &str, threshold: f64) -> AnnotationRecord {
    let tokens = tokenize(description);
    let mut features = Vec::new();
    for f in &context.features {
        let wanted = content_tokens(&f.text);
        if let Some((score, s, e)) = best_window(&tokens, &wanted) {
            if score >= threshold {
                features.push(DescriptionFeature {
                    span: Span::new(tokens[s].start, tokens[e].end),
                    link: FeatureLink::Context(f.feature_id.clone()),
                });
            }
        }
    }

    let linked: Vec<Span> = features.iter().map(|f| f.span).collect();
    for sentence in sentences(description) {
        if linked.iter().any(|l| l.overlaps(&sentence)) {
            continue;
        }
        let inside: Vec<Token> =
            tokens.iter().filter(|t| t.start >= sentence.start && t.end <= sentence.end).cloned().collect();
        if looks_factual(&inside) {
            features.push(DescriptionFeature { span: sentence, link: FeatureLink::Hallucinated });
        }
    }
    features.sort_by_key(|f| f.span);

    AnnotationRecord {
        run_id: String::new(),
        annotator: AUTO_ANNOTATOR.into(),
        description_features: features,
        completed_at: DateTime::UNIX_EPOCH,
    }
}
