//! Tokenization, noun/verb tagging and lemmatization.
//!
//! Sentences are reduced to a [`ContentWordSet`]: the set of lemmatized
//! nouns and verbs they contain. All lexical distances in the crate are
//! computed over these sets, so two sentences are only comparable when
//! they were processed under the same [`TaggerConfig`] (see
//! [`TaggerConfig::config_hash`]).

mod lemma;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub use lemma::lemmatize;

static DEFAULT_STOPWORDS: &str = include_str!("../../data/stopwords.txt");

/// Bumped whenever the shipped word tables or suffix rules change, so that
/// config hashes from older builds stop matching.
const RULESET_VERSION: &str = "rules-v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tag {
    Noun,
    Verb,
    Other,
}

impl Tag {
    pub fn is_content(self) -> bool {
        matches!(self, Tag::Noun | Tag::Verb)
    }
}

impl FromStr for Tag {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim() {
            "noun" => Ok(Tag::Noun),
            "verb" => Ok(Tag::Verb),
            "other" => Ok(Tag::Other),
            other => Err(format!("unknown tag `{other}`")),
        }
    }
}

impl fmt::Display for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Tag::Noun => "noun",
            Tag::Verb => "verb",
            Tag::Other => "other",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub surface: String,
    pub lemma: String,
    pub tag: Tag,
}

/// The union of lemmatized nouns and verbs of one sentence.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ContentWordSet {
    lemmas: BTreeSet<String>,
}

impl ContentWordSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.lemmas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lemmas.is_empty()
    }

    pub fn contains(&self, lemma: &str) -> bool {
        self.lemmas.contains(lemma)
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.lemmas.iter().map(String::as_str)
    }

    pub fn intersection_len(&self, other: &ContentWordSet) -> usize {
        self.lemmas.intersection(&other.lemmas).count()
    }

    pub fn union_len(&self, other: &ContentWordSet) -> usize {
        self.len() + other.len() - self.intersection_len(other)
    }
}

impl<S: Into<String>> FromIterator<S> for ContentWordSet {
    fn from_iter<I: IntoIterator<Item = S>>(iter: I) -> Self {
        Self {
            lemmas: iter.into_iter().map(|s| s.into().to_lowercase()).collect(),
        }
    }
}

/// Tagger configuration. Immutable once built; share it by reference.
#[derive(Debug, Clone)]
pub struct TaggerConfig {
    stopwords: BTreeSet<String>,
    lexicon: Option<BTreeMap<String, Tag>>,
    lexicon_path: Option<PathBuf>,
    suffix_rules_enabled: bool,
    lemmatize: bool,
}

impl Default for TaggerConfig {
    fn default() -> Self {
        Self {
            stopwords: parse_word_list(DEFAULT_STOPWORDS),
            lexicon: None,
            lexicon_path: None,
            suffix_rules_enabled: true,
            lemmatize: true,
        }
    }
}

impl TaggerConfig {
    /// Replaces the stopword list with the words in `path` (one per line).
    pub fn with_stopword_file(mut self, path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read stopword file {}: {e}", path.display())))?;
        self.stopwords = parse_word_list(&text);
        self.validate()?;
        Ok(self)
    }

    pub fn with_stopwords<I, S>(mut self, words: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        self.stopwords = words
            .into_iter()
            .map(|w| w.as_ref().trim().to_lowercase())
            .filter(|w| !w.is_empty())
            .collect();
        self.validate()?;
        Ok(self)
    }

    /// Loads a `word<TAB>tag` lexicon. Lexicon entries take precedence over
    /// every heuristic.
    pub fn with_lexicon_file(mut self, path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read lexicon {}: {e}", path.display())))?;
        let mut lexicon = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (word, tag) = line
                .split_once('\t')
                .ok_or_else(|| Error::Config(format!("{}:{}: expected `word<TAB>tag`", path.display(), i + 1)))?;
            let tag: Tag = tag
                .parse()
                .map_err(|e| Error::Config(format!("{}:{}: {e}", path.display(), i + 1)))?;
            lexicon.insert(word.trim().to_lowercase(), tag);
        }
        self.lexicon = Some(lexicon);
        self.lexicon_path = Some(path.to_path_buf());
        Ok(self)
    }

    pub fn with_lexicon_entries<I, S>(mut self, entries: I) -> Self
    where
        I: IntoIterator<Item = (S, Tag)>,
        S: AsRef<str>,
    {
        self.lexicon = Some(
            entries
                .into_iter()
                .map(|(w, t)| (w.as_ref().to_lowercase(), t))
                .collect(),
        );
        self
    }

    pub fn with_suffix_rules(mut self, enabled: bool) -> Self {
        self.suffix_rules_enabled = enabled;
        self
    }

    pub fn with_lemmatization(mut self, enabled: bool) -> Self {
        self.lemmatize = enabled;
        self
    }

    pub fn stopwords(&self) -> &BTreeSet<String> {
        &self.stopwords
    }

    pub fn lexicon_path(&self) -> Option<&Path> {
        self.lexicon_path.as_deref()
    }

    pub fn suffix_rules_enabled(&self) -> bool {
        self.suffix_rules_enabled
    }

    pub fn lemmatization_enabled(&self) -> bool {
        self.lemmatize
    }

    pub fn validate(&self) -> Result<()> {
        if self.lexicon.is_none() && self.stopwords.is_empty() {
            return Err(Error::Config(
                "stopword list must be non-empty when no lexicon is loaded".into(),
            ));
        }
        Ok(())
    }

    /// Stable digest of everything that influences content-word extraction.
    pub fn config_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(RULESET_VERSION.as_bytes());
        h.update(b"\0stopwords");
        for w in &self.stopwords {
            h.update(b"\0");
            h.update(w.as_bytes());
        }
        h.update(b"\0lexicon");
        if let Some(lex) = &self.lexicon {
            for (w, t) in lex {
                h.update(format!("\0{w}\t{t}").as_bytes());
            }
        }
        h.update(format!("\0suffix={}\0lemma={}", self.suffix_rules_enabled, self.lemmatize).as_bytes());
        hex::encode(&h.finalize()[..8])
    }

    fn is_stopword(&self, word: &str) -> bool {
        self.stopwords.contains(word)
    }
}

fn parse_word_list(text: &str) -> BTreeSet<String> {
    text.lines()
        .map(|l| l.trim().to_lowercase())
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .collect()
}

/// Lowercases, splits on whitespace and trims punctuation from both ends of
/// every token. Never yields empty tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|raw| raw.trim_matches(|c: char| !c.is_alphanumeric()).to_lowercase())
        .filter(|t| !t.is_empty())
        .collect()
}

fn heuristic_tag(word: &str, config: &TaggerConfig) -> Tag {
    if config.is_stopword(word) || !word.chars().any(char::is_alphabetic) {
        return Tag::Other;
    }
    let bare = lemma::strip_possessive(word);
    if let Some(irr) = lemma::irregular_table().get(bare) {
        return irr.tag;
    }
    if lemma::known_nouns().contains(bare) {
        return Tag::Noun;
    }
    if config.suffix_rules_enabled && lemma::has_verbal_suffix(bare) {
        return Tag::Verb;
    }
    Tag::Noun
}

/// Tags each token as noun, verb or other and attaches its lemma.
pub fn tag_tokens<S: AsRef<str>>(tokens: &[S], config: &TaggerConfig) -> Vec<Token> {
    tokens
        .iter()
        .map(|t| {
            let surface = t.as_ref().to_lowercase();
            let tag = config
                .lexicon
                .as_ref()
                .and_then(|lex| lex.get(&surface).copied())
                .unwrap_or_else(|| heuristic_tag(&surface, config));
            let lemma = if config.lemmatize {
                lemmatize(&surface, tag)
            } else {
                surface.clone()
            };
            Token { surface, lemma, tag }
        })
        .collect()
}

/// Extracts the set of lemmatized nouns and verbs of `text`.
///
/// A lemma that is itself a stopword ("closing" -> "close") is dropped, so
/// the set is stable when its own lemmas are fed back in.
pub fn content_word_set(text: &str, config: &TaggerConfig) -> ContentWordSet {
    let tokens = tokenize(text);
    let lemmas = tag_tokens(&tokens, config)
        .into_iter()
        .filter(|t| t.tag.is_content() && !config.is_stopword(&t.lemma))
        .map(|t| t.lemma)
        .collect();
    ContentWordSet { lemmas }
}
