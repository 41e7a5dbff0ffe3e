// SPDX-License-Identifier: Apache-2.0

//! Text cleaning for raw catalog values.
//!
//! Provider catalogs ship descriptions with markup, stray entities, ragged
//! whitespace and a zoo of unit spellings. [`clean_text`] removes the first
//! three and rewrites units into one canonical form:
//!
//! | raw                              | canonical          |
//! |----------------------------------|--------------------|
//! | `2,0 KM`, `2.0km`, `2 kilometres`| `2 km`             |
//! | `300m`, `300 mtrs`, `300 metres` | `300 meters`       |
//! | `10 min walk`, `10-mins drive`   | `10-minute walk`   |
//! | `5 mins`, `1 min`                | `5 minutes`, `1 minute` |
//!
//! A bare lowercase `m` directly followed by `walk`/`drive`/`ride` is left as
//! is (it may mean minutes), as is an uppercase `M` (it may mean million).
//! Unknown units pass through untouched.

use std::borrow::Cow;
use std::sync::LazyLock;

use regex::{Captures, Regex};

static INLINE_TAG: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)</?(?:b|i|u|em|strong|span|a|sup|sub|small|font|mark)(?:\s[^>]*)?>").unwrap());
static ANY_TAG: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"<[A-Za-z/!?][^>]*>").unwrap());

static KILOMETERS: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)\b(\d+(?:[.,]\d+)?)\s*(?:km|kms|kilometers?|kilometres?)\b").unwrap());
static METERS: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)\b(\d+(?:[.,]\d+)?)\s*(m|mt|mtr|mtrs|meters?|metres?)\b(\s+(?:walk|drive|ride)\b)?").unwrap()
});
static MINUTE_TRIP: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(
        r"(?i)\b(\d+)\s*(?:-\s*)?(?:min|mins|minute|minutes)\.?(?:\s*-\s*|\s+)(walk|drive|ride|journey|transfer)\b",
    )
    .unwrap()
});
static MINUTES: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)\b(\d+)\s*(?:min|mins|minute|minutes)\b").unwrap());

/// Clean one raw catalog value. Total, deterministic and idempotent.
pub fn clean_text(raw: &str) -> String {
    if raw.is_empty() {
        return String::new();
    }
    let text = strip_markup(raw);
    let text = collapse_whitespace(&text);
    let text = canonicalize_units(&text);
    collapse_whitespace(&text)
}

/// Strips tags and decodes entities until neither changes the text, so that
/// escaped markup such as `&lt;b&gt;` cannot survive as a tag.
fn strip_markup(raw: &str) -> String {
    let mut text = raw.to_owned();
    loop {
        let stripped = INLINE_TAG.replace_all(&text, "");
        let stripped = ANY_TAG.replace_all(&stripped, " ").into_owned();
        let decoded = html_escape::decode_html_entities(&stripped).into_owned();
        if decoded == text {
            return decoded;
        }
        text = decoded;
    }
}

pub(crate) fn collapse_whitespace(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn canonicalize_units(text: &str) -> String {
    let text = KILOMETERS.replace_all(text, |c: &Captures| format!("{} km", canonical_number(&c[1])));
    let text = METERS.replace_all(&text, |c: &Captures| {
        let unit = &c[2];
        let ambiguous = unit == "M" || (unit == "m" && c.get(3).is_some());
        if ambiguous {
            c[0].to_owned()
        } else {
            let trailing = c.get(3).map_or("", |m| m.as_str());
            format!("{} meters{}", canonical_number(&c[1]), trailing)
        }
    });
    let text = MINUTE_TRIP
        .replace_all(&text, |c: &Captures| format!("{}-minute {}", trim_leading_zeros(&c[1]), c[2].to_lowercase()));
    let text = replace_plain_minutes(&text);
    text.into_owned()
}

// Runs after the trip rule; `10-minute walk` no longer matches because the
// hyphen sits between the number and the unit.
fn replace_plain_minutes(text: &str) -> Cow<'_, str> {
    MINUTES.replace_all(text, |c: &Captures| match trim_leading_zeros(&c[1]) {
        "1" => "1 minute".to_owned(),
        n => format!("{n} minutes"),
    })
}

fn trim_leading_zeros(digits: &str) -> &str {
    let t = digits.trim_start_matches('0');
    if t.is_empty() {
        "0"
    } else {
        t
    }
}

/// `2,0` → `2`, `2.50` → `2.5`, `1,500` → `1500`.
///
/// A comma followed by exactly three digits after a short integer part is a
/// thousands separator; any other comma is a decimal comma.
pub(crate) fn canonical_number(raw: &str) -> String {
    let mut number = match raw.split_once(',') {
        Some((int, frac)) if frac.len() == 3 && int.len() <= 3 => format!("{int}{frac}"),
        Some((int, frac)) => format!("{int}.{frac}"),
        None => raw.to_owned(),
    };
    if let Some((int, frac)) = number.split_once('.') {
        let frac = frac.trim_end_matches('0');
        number = if frac.is_empty() { int.to_owned() } else { format!("{int}.{frac}") };
    }
    let (int, rest) = match number.split_once('.') {
        Some((i, f)) => (i.to_owned(), format!(".{f}")),
        None => (number.clone(), String::new()),
    };
    format!("{}{}", trim_leading_zeros(&int), rest)
}

/// Whether any `<letter ... >` tag survives in `text`.
pub fn contains_tag(text: &str) -> bool {
    static TAG: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"<[A-Za-z][^>]*>").unwrap());
    TAG.is_match(text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strips_tags_and_entities() {
        assert_eq!(clean_text("<b>Rooftop&nbsp;pool</b>  and spa"), "Rooftop pool and spa");
        assert_eq!(clean_text("Pool<br/>Spa"), "Pool Spa");
        assert_eq!(clean_text("&lt;script&gt;alert(1)&lt;/script&gt; ok"), "alert(1) ok");
        assert_eq!(clean_text("Fish &amp; chips"), "Fish & chips");
    }

    #[test]
    fn canonical_distances() {
        assert_eq!(clean_text("2,0 KM from Albert Hall"), "2 km from Albert Hall");
        assert_eq!(clean_text("1.50km to the station"), "1.5 km to the station");
        assert_eq!(clean_text("3 kilometres away"), "3 km away");
        assert_eq!(clean_text("300m from the beach"), "300 meters from the beach");
        assert_eq!(clean_text("5 M visitors"), "5 M visitors");
    }

    #[test]
    fn canonical_durations() {
        assert_eq!(clean_text("10 min walk from City Palace"), "10-minute walk from City Palace");
        assert_eq!(clean_text("15 Minutes drive"), "15-minute drive");
        assert_eq!(clean_text("10-minute walk"), "10-minute walk");
        assert_eq!(clean_text("about 1 min away"), "about 1 minute away");
        assert_eq!(clean_text("5 m walk"), "5 m walk");
    }

    #[test]
    fn empty_is_identity() {
        assert_eq!(clean_text(""), "");
        assert_eq!(clean_text("   \n\t "), "");
    }

    #[test]
    fn number_forms() {
        assert_eq!(canonical_number("2,0"), "2");
        assert_eq!(canonical_number("1,500"), "1500");
        assert_eq!(canonical_number("2.50"), "2.5");
        assert_eq!(canonical_number("007"), "7");
        assert_eq!(canonical_number("0.5"), "0.5");
    }
}
