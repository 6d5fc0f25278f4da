//! Deterministic offline stand-in for a chat model.
//!
//! The mock rewrites a sentence by swapping some of its content words for
//! synonyms from a shipped table. The number of swaps is chosen so that the
//! Jaccard distance between the original and rewritten content-word sets
//! lands near the requested distance: replacing `k` of `m` distinct lemmas
//! with fresh words yields distance `2k / (m + k)`, so `k = d·m / (2 - d)`,
//! rounded stochastically under the seed.

use std::collections::{HashMap, HashSet};
use std::sync::OnceLock;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::textnorm::{tag_tokens, TaggerConfig};

static SYNONYMS_TSV: &str = include_str!("../../data/synonyms.tsv");

pub(crate) fn synonym_table() -> &'static HashMap<String, Vec<String>> {
    static TABLE: OnceLock<HashMap<String, Vec<String>>> = OnceLock::new();
    TABLE.get_or_init(|| {
        SYNONYMS_TSV
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .filter_map(|l| {
                let (lemma, alts) = l.split_once('\t')?;
                Some((
                    lemma.trim().to_string(),
                    alts.split_whitespace().map(str::to_string).collect(),
                ))
            })
            .collect()
    })
}

fn default_config() -> &'static TaggerConfig {
    static CONFIG: OnceLock<TaggerConfig> = OnceLock::new();
    CONFIG.get_or_init(TaggerConfig::default)
}

const ONSETS: &[&str] = &["b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "t", "v", "z"];
const NUCLEI: &[&str] = &["a", "e", "i", "o", "u"];

/// Three consonant-vowel syllables; always tagged as a noun and never
/// altered by lemmatization.
fn pseudo_word(rng: &mut ChaCha8Rng) -> String {
    (0..3)
        .map(|_| format!("{}{}", ONSETS.choose(rng).unwrap(), NUCLEI.choose(rng).unwrap()))
        .collect()
}

/// A whitespace token split into leading punctuation, word core and
/// trailing punctuation.
struct Piece<'a> {
    lead: &'a str,
    core: &'a str,
    trail: &'a str,
}

fn split_piece(raw: &str) -> Piece<'_> {
    let start = raw.find(|c: char| c.is_alphanumeric()).unwrap_or(raw.len());
    let end = raw
        .rfind(|c: char| c.is_alphanumeric())
        .map_or(start, |i| i + raw[i..].chars().next().unwrap().len_utf8());
    Piece {
        lead: &raw[..start],
        core: &raw[start..end.max(start)],
        trail: &raw[end.max(start)..],
    }
}

fn match_case(template: &str, word: &str) -> String {
    if template.chars().next().is_some_and(char::is_uppercase) {
        let mut c = word.chars();
        c.next()
            .map(|f| f.to_uppercase().chain(c).collect())
            .unwrap_or_default()
    } else {
        word.to_string()
    }
}

const CONNECTORS: [&str; 4] = [" while ", " as ", " and ", " then "];

/// "A lady laughs as an infant cries." -> "An infant cries as a lady laughs."
fn swap_clauses(sentence: &str) -> String {
    let body_end = sentence
        .rfind(|c: char| c.is_alphanumeric())
        .map_or(0, |i| i + sentence[i..].chars().next().unwrap().len_utf8());
    let (body, trail) = sentence.split_at(body_end);
    let lower = body.to_lowercase();
    for conn in CONNECTORS {
        if let Some(at) = lower.find(conn) {
            // byte offsets coincide only when lowercasing kept lengths
            if lower.len() != body.len() {
                return sentence.to_string();
            }
            let first = &body[..at];
            let second = &body[at + conn.len()..];
            if first.trim().is_empty() || second.trim().is_empty() {
                continue;
            }
            let mut first_chars = first.chars();
            let first_lc: String = first_chars
                .next()
                .map(|f| f.to_lowercase().chain(first_chars).collect())
                .unwrap_or_default();
            return format!("{}{}{}{}", match_case("X", second), conn, first_lc, trail);
        }
    }
    sentence.to_string()
}

/// Rewrites `sentence` so its content words move roughly `target_d` away
/// (Jaccard distance) from the original. Pure function of its arguments.
pub fn mock_paraphrase(sentence: &str, target_d: f64, seed: u64) -> String {
    let target_d = target_d.clamp(0.0, 1.0);
    let config = default_config();
    let raw: Vec<&str> = sentence.split_whitespace().collect();
    let pieces: Vec<Piece> = raw.iter().map(|r| split_piece(r)).collect();
    let cores: Vec<String> = pieces.iter().map(|p| p.core.to_lowercase()).collect();
    let tokens = tag_tokens(&cores, config);

    // lemma of each piece, if it is a content word
    let lemma_of: Vec<Option<&str>> = tokens
        .iter()
        .map(|t| {
            (t.tag.is_content() && !t.surface.is_empty() && !config.stopwords().contains(&t.lemma))
                .then_some(t.lemma.as_str())
        })
        .collect();
    let mut lemmas: Vec<&str> = Vec::new();
    for l in lemma_of.iter().flatten() {
        if !lemmas.contains(l) {
            lemmas.push(l);
        }
    }
    let m = lemmas.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    if m == 0 {
        return sentence.to_string();
    }

    let exact = if target_d >= 1.0 {
        m as f64
    } else {
        target_d * m as f64 / (2.0 - target_d)
    };
    let mut k = exact.floor() as usize;
    if rng.gen::<f64>() < exact - exact.floor() {
        k += 1;
    }
    let k = k.min(m);

    let mut order = lemmas.clone();
    order.shuffle(&mut rng);
    let existing: HashSet<&str> = lemmas.iter().copied().collect();
    let mut used: HashSet<String> = HashSet::new();
    let mut replacement: HashMap<&str, String> = HashMap::new();
    for &lemma in &order[..k] {
        let candidates: Vec<&String> = synonym_table()
            .get(lemma)
            .map(|alts| {
                alts.iter()
                    .filter(|a| !existing.contains(a.as_str()) && !used.contains(*a))
                    .collect()
            })
            .unwrap_or_default();
        let word = match candidates.choose(&mut rng) {
            Some(w) => (*w).clone(),
            None => loop {
                let w = pseudo_word(&mut rng);
                if !existing.contains(w.as_str()) && !used.contains(&w) && !config.stopwords().contains(&w) {
                    break w;
                }
            },
        };
        used.insert(word.clone());
        replacement.insert(lemma, word);
    }

    let out: Vec<String> = pieces
        .iter()
        .zip(&lemma_of)
        .map(|(p, lemma)| match lemma.and_then(|l| replacement.get(l)) {
            Some(word) => format!("{}{}{}", p.lead, match_case(p.core, word), p.trail),
            None => format!("{}{}{}", p.lead, p.core, p.trail),
        })
        .collect();
    let rewritten = out.join(" ");
    if target_d > 0.5 {
        swap_clauses(&rewritten)
    } else {
        rewritten
    }
}
