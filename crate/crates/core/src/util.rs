// SPDX-License-Identifier: Apache-2.0

use std::io::{self, Write};
use std::path::Path;

use rust_decimal::prelude::{FromPrimitive, ToPrimitive};
use rust_decimal::{Decimal, RoundingStrategy};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Replaces `path` with `bytes` through a temp file in the same directory, so
/// readers see either the old or the new content, never a prefix.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

/// One JSON document per line, each terminated by `\n`.
pub fn to_jsonl<T: Serialize>(items: &[T]) -> String {
    let mut out = String::new();
    for item in items {
        out.push_str(&serde_json::to_string(item).expect("records serialize"));
        out.push('\n');
    }
    out
}

/// Parses line-delimited JSON, skipping blank lines. Errors carry the 1-based line.
pub fn from_jsonl<T: DeserializeOwned>(text: &str) -> Result<Vec<T>, (usize, serde_json::Error)> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| (i + 1, e)))
        .collect()
}

/// Round-half-even at `dp` decimal places, using the shortest decimal
/// representation of `x`.
pub fn round_half_even(x: f64, dp: u32) -> f64 {
    match Decimal::from_f64(x) {
        Some(d) => d.round_dp_with_strategy(dp, RoundingStrategy::MidpointNearestEven).to_f64().unwrap_or(x),
        None => x,
    }
}

/// `100 * numerator / denominator` rounded half-even to tenths, computed in
/// integers so ties are exact.
pub fn percent_tenths(numerator: u64, denominator: u64) -> f64 {
    assert!(denominator > 0);
    let scaled = 1000 * numerator;
    let (q, r) = (scaled / denominator, scaled % denominator);
    let rounded = match (2 * r).cmp(&denominator) {
        std::cmp::Ordering::Less => q,
        std::cmp::Ordering::Greater => q + 1,
        std::cmp::Ordering::Equal => q + (q % 2),
    };
    rounded as f64 / 10.0
}
