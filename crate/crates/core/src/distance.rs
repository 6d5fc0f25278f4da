//! Sentence distances: Jaccard over content-word sets and character-level
//! normalized Levenshtein.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::textnorm::{content_word_set, ContentWordSet, TaggerConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    #[default]
    Jaccard,
    Levenshtein,
}

impl FromStr for Metric {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "jaccard" => Ok(Metric::Jaccard),
            "levenshtein" => Ok(Metric::Levenshtein),
            other => Err(format!("unknown metric `{other}` (expected jaccard or levenshtein)")),
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Metric::Jaccard => "jaccard",
            Metric::Levenshtein => "levenshtein",
        })
    }
}

/// A similarity in `[0, 1]` and its complementary distance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistanceValue {
    pub metric: Metric,
    pub similarity: f64,
    pub distance: f64,
}

impl DistanceValue {
    fn from_similarity(metric: Metric, similarity: f64) -> Self {
        let similarity = similarity.clamp(0.0, 1.0);
        Self {
            metric,
            similarity,
            distance: 1.0 - similarity,
        }
    }

    fn from_distance(metric: Metric, distance: f64) -> Self {
        let distance = distance.clamp(0.0, 1.0);
        Self {
            metric,
            similarity: 1.0 - distance,
            distance,
        }
    }
}

/// `|a ∩ b| / |a ∪ b|`. Two empty sets are identical (1.0).
pub fn jaccard_similarity(a: &ContentWordSet, b: &ContentWordSet) -> f64 {
    let union = a.union_len(b);
    if union == 0 {
        return 1.0;
    }
    a.intersection_len(b) as f64 / union as f64
}

/// Minimal number of single-character insertions, deletions and
/// substitutions turning `a` into `b`. Operates on Unicode scalar values.
pub fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let (short, long) = if a.len() <= b.len() { (&a, &b) } else { (&b, &a) };
    if short.is_empty() {
        return long.len();
    }

    let mut prev: Vec<usize> = (0..=short.len()).collect();
    let mut cur = vec![0; short.len() + 1];
    for (i, lc) in long.iter().enumerate() {
        cur[0] = i + 1;
        for (j, sc) in short.iter().enumerate() {
            let sub = prev[j] + usize::from(lc != sc);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[short.len()]
}

/// Lowercase, drop punctuation, collapse whitespace.
pub fn normalize_for_edit(text: &str) -> String {
    let stripped: String = text
        .chars()
        .filter(|c| !c.is_ascii_punctuation() && !is_unicode_punct(*c))
        .flat_map(char::to_lowercase)
        .collect();
    stripped.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn is_unicode_punct(c: char) -> bool {
    matches!(
        c,
        '\u{2018}' | '\u{2019}' | '\u{201C}' | '\u{201D}' | '\u{2013}' | '\u{2014}' | '\u{2026}'
    )
}

pub fn normalized_levenshtein(a: &str, b: &str) -> f64 {
    let a = normalize_for_edit(a);
    let b = normalize_for_edit(b);
    let longest = a.chars().count().max(b.chars().count());
    if longest == 0 {
        return 0.0;
    }
    levenshtein(&a, &b) as f64 / longest as f64
}

/// Distance between two sentences under `metric`.
pub fn normalized_distance(a: &str, b: &str, metric: Metric, config: &TaggerConfig) -> DistanceValue {
    match metric {
        Metric::Jaccard => {
            let sa = content_word_set(a, config);
            let sb = content_word_set(b, config);
            DistanceValue::from_similarity(metric, jaccard_similarity(&sa, &sb))
        }
        Metric::Levenshtein => DistanceValue::from_distance(metric, normalized_levenshtein(a, b)),
    }
}
