//! Rule-based suffix stripping for English nouns and verbs.

use std::collections::{HashMap, HashSet};
use std::sync::OnceLock;

use super::Tag;

static IRREGULAR_TSV: &str = include_str!("../../data/irregular.tsv");
static KNOWN_NOUNS_TXT: &str = include_str!("../../data/nouns.txt");

/// An entry of the shipped irregular-form table.
#[derive(Debug, Clone)]
pub(crate) struct Irregular {
    pub lemma: String,
    pub tag: Tag,
}

pub(crate) fn irregular_table() -> &'static HashMap<String, Irregular> {
    static TABLE: OnceLock<HashMap<String, Irregular>> = OnceLock::new();
    TABLE.get_or_init(|| {
        IRREGULAR_TSV
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .filter_map(|line| {
                let mut cols = line.split('\t');
                let form = cols.next()?;
                let lemma = cols.next()?;
                let tag = cols.next()?.parse().ok()?;
                Some((
                    form.to_string(),
                    Irregular {
                        lemma: lemma.to_string(),
                        tag,
                    },
                ))
            })
            .collect()
    })
}

/// Nouns that the suffix rules would mangle; they are their own lemma.
pub(crate) fn known_nouns() -> &'static HashSet<String> {
    static SET: OnceLock<HashSet<String>> = OnceLock::new();
    SET.get_or_init(|| {
        KNOWN_NOUNS_TXT
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(str::to_string)
            .collect()
    })
}

pub(crate) fn is_vowel_at(word: &[char], i: usize) -> bool {
    match word[i] {
        'a' | 'e' | 'i' | 'o' | 'u' => true,
        // `y` counts as a vowel after a consonant ("cry", "typ").
        'y' => i > 0 && !is_vowel_at(word, i - 1),
        _ => false,
    }
}

fn is_consonant_at(word: &[char], i: usize) -> bool {
    word[i].is_ascii_alphabetic() && !is_vowel_at(word, i)
}

pub(crate) fn has_vowel(word: &[char]) -> bool {
    (0..word.len()).any(|i| is_vowel_at(word, i))
}

/// Number of vowel-consonant sequences in `word` (the Porter measure).
fn measure(word: &[char]) -> usize {
    let mut m = 0;
    let mut prev_vowel = false;
    for i in 0..word.len() {
        let v = is_vowel_at(word, i);
        if prev_vowel && !v {
            m += 1;
        }
        prev_vowel = v;
    }
    m
}

/// Strips a possessive `'s` so that "dog's" behaves like "dog".
pub(crate) fn strip_possessive(word: &str) -> &str {
    word.strip_suffix("'s")
        .or_else(|| word.strip_suffix("\u{2019}s"))
        .filter(|w| !w.is_empty())
        .unwrap_or(word)
}

/// True when `word` looks like an -ing/-ed/-s inflected verb.
pub(crate) fn has_verbal_suffix(word: &str) -> bool {
    let chars: Vec<char> = word.chars().collect();
    let n = chars.len();
    if let Some(stem) = word.strip_suffix("ing") {
        let stem: Vec<char> = stem.chars().collect();
        return stem.len() >= 2 && has_vowel(&stem);
    }
    if word.ends_with("eed") {
        return false;
    }
    if let Some(stem) = word.strip_suffix("ed") {
        let stem: Vec<char> = stem.chars().collect();
        return stem.len() >= 2 && has_vowel(&stem);
    }
    if n >= 3 && chars[n - 1] == 's' {
        let before = n - 2;
        if matches!(chars[before], 's' | 'u' | 'i') {
            return false;
        }
        return is_consonant_at(&chars, before) && chars[before] != 'y';
    }
    false
}

/// Restores the spelling of a verb stem left after removing -ing or -ed.
fn repair_stem(stem: &str) -> String {
    let chars: Vec<char> = stem.chars().collect();
    let n = chars.len();
    if n < 2 {
        return stem.to_string();
    }
    let last = chars[n - 1];
    let prev = chars[n - 2];

    // running -> run, but falling -> fall, buzzing -> buzz, hissing -> hiss
    if last == prev && is_consonant_at(&chars, n - 1) && !matches!(last, 'l' | 's' | 'z' | 'f') {
        return chars[..n - 1].iter().collect();
    }
    if last == 'e' {
        return stem.to_string();
    }

    let add_e =
        // whistl(ing), rattl(ing), idl(ing)
        (last == 'l' && matches!(prev, 'b' | 'c' | 'd' | 'f' | 'g' | 'k' | 'p' | 't' | 'z'))
        // driv(ing), continu(ing)
        || matches!(last, 'v' | 'u' | 'c')
        // judg(ing)
        || (last == 'g' && prev == 'd')
        // rais(ed), rins(ing), snooz(ing)
        || (last == 's' && prev != 's')
        || (last == 'z' && prev != 'z' && is_vowel_at(&chars, n - 2))
        // vibrat(ing), rotat(ing)
        || (n >= 5 && last == 't' && prev == 'a' && is_consonant_at(&chars, n - 3))
        // mak(ing), typ(ing), snor(ing)
        || (n >= 3
            && measure(&chars) == 1
            && is_consonant_at(&chars, n - 3)
            && is_vowel_at(&chars, n - 2)
            && is_consonant_at(&chars, n - 1)
            && !matches!(last, 'w' | 'x' | 'y'));

    if add_e {
        format!("{stem}e")
    } else {
        stem.to_string()
    }
}

/// Plural / third-person -s handling shared by nouns and verbs.
fn strip_plural(word: &str) -> String {
    let n = word.chars().count();
    if n > 4 {
        if let Some(stem) = word.strip_suffix("ies") {
            return format!("{stem}y");
        }
    }
    for suffix in ["sses", "shes", "ches", "xes", "zzes"] {
        if word.ends_with(suffix) {
            return word[..word.len() - 2].to_string();
        }
    }
    if n >= 3 && word.ends_with('s') && !word.ends_with("ss") && !word.ends_with("us") && !word.ends_with("is") {
        return word[..word.len() - 1].to_string();
    }
    word.to_string()
}

/// Reduces a lowercase surface form to its lemma. Tokens tagged `other`
/// come back unchanged; the result is never empty.
pub fn lemmatize(surface: &str, tag: Tag) -> String {
    if surface.is_empty() || tag == Tag::Other {
        return surface.to_string();
    }
    let word = strip_possessive(surface);
    if let Some(irr) = irregular_table().get(word) {
        return irr.lemma.clone();
    }
    if known_nouns().contains(word) {
        return word.to_string();
    }
    let lemma = match tag {
        Tag::Verb => lemmatize_verb(word),
        _ => strip_plural(word),
    };
    if lemma.is_empty() {
        surface.to_string()
    } else {
        lemma
    }
}

fn lemmatize_verb(word: &str) -> String {
    if let Some(stem) = word.strip_suffix("ing") {
        let chars: Vec<char> = stem.chars().collect();
        if chars.len() >= 2 && has_vowel(&chars) {
            return repair_stem(stem);
        }
        return word.to_string();
    }
    if let Some(stem) = word.strip_suffix("ied") {
        // cried -> cry, but died -> die
        return if stem.chars().count() >= 2 {
            format!("{stem}y")
        } else {
            word[..word.len() - 1].to_string()
        };
    }
    if !word.ends_with("eed") {
        if let Some(stem) = word.strip_suffix("ed") {
            let chars: Vec<char> = stem.chars().collect();
            if chars.len() >= 2 && has_vowel(&chars) {
                return repair_stem(stem);
            }
            return word.to_string();
        }
    }
    strip_plural(word)
}
