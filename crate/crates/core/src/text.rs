use std::fmt;

use serde::{Deserialize, Serialize};

/// Text after [`normalize_text`]: lowercase, trimmed, single-spaced, no
/// terminal period.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NormalizedText(String);

impl NormalizedText {
    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_string(self) -> String {
        self.0
    }
}

impl fmt::Display for NormalizedText {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl AsRef<str> for NormalizedText {
    fn as_ref(&self) -> &str {
        &self.0
    }
}

/// Minimal normalization applied before similarity mapping and metric
/// matching. Articles and inner punctuation are left alone.
///
/// Lowercasing is per character and only applied when it maps to a single
/// character, so the result never has more characters than the input.
pub fn normalize_text(raw: &str) -> NormalizedText {
    let mut out = String::with_capacity(raw.len());
    let mut pending_space = false;
    for c in raw.chars() {
        if c.is_whitespace() {
            pending_space = !out.is_empty();
            continue;
        }
        if pending_space {
            out.push(' ');
            pending_space = false;
        }
        out.push(lower_char(c));
    }
    // A run like "grass . ." must settle in one pass for idempotence.
    loop {
        let trimmed = out.trim_end_matches(|c: char| c == '.' || c.is_whitespace());
        if trimmed.len() == out.len() {
            break;
        }
        out.truncate(trimmed.len());
    }
    NormalizedText(out)
}

fn lower_char(c: char) -> char {
    let mut it = c.to_lowercase();
    match (it.next(), it.next()) {
        (Some(l), None) => l,
        _ => c,
    }
}
