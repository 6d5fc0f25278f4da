//! Caption corpora: ingestion, many-to-one collision detection and
//! ground-truth/candidate grouping.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::distance::jaccard_similarity;
use crate::error::{Error, Result};
use crate::textnorm::{content_word_set, tokenize, TaggerConfig};

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Caption {
    pub media_id: String,
    #[serde(rename = "caption")]
    pub text: String,
    pub source_index: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Corpus {
    captions: Vec<Caption>,
}

impl Corpus {
    /// Builds a corpus from `(media_id, text)` pairs in order, assigning
    /// `source_index` per media item. Blank captions are dropped and counted.
    pub fn from_pairs<I, M, T>(pairs: I) -> (Self, usize)
    where
        I: IntoIterator<Item = (M, T)>,
        M: Into<String>,
        T: Into<String>,
    {
        let mut builder = CorpusBuilder::default();
        for (m, t) in pairs {
            builder.push(m.into(), t.into());
        }
        (builder.corpus, builder.skipped)
    }

    pub fn captions(&self) -> &[Caption] {
        &self.captions
    }

    pub fn len(&self) -> usize {
        self.captions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.captions.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Caption> {
        self.captions.iter()
    }

    /// Writes one JSON object per caption (`media_id`, `caption`, `source_index`).
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<()> {
        for c in &self.captions {
            serde_json::to_writer(&mut out, c)?;
            out.write_all(b"\n").map_err(|e| Error::io("<output>", e))?;
        }
        Ok(())
    }
}

impl<'a> IntoIterator for &'a Corpus {
    type Item = &'a Caption;
    type IntoIter = std::slice::Iter<'a, Caption>;

    fn into_iter(self) -> Self::IntoIter {
        self.captions.iter()
    }
}

#[derive(Default)]
struct CorpusBuilder {
    corpus: Corpus,
    next_index: HashMap<String, usize>,
    skipped: usize,
}

impl CorpusBuilder {
    fn push(&mut self, media_id: String, text: String) {
        let text = text.trim();
        if text.is_empty() {
            self.skipped += 1;
            return;
        }
        let slot = self.next_index.entry(media_id.clone()).or_insert(0);
        self.corpus.captions.push(Caption {
            media_id,
            text: text.to_string(),
            source_index: *slot,
        });
        *slot += 1;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InputFormat {
    Csv,
    Jsonl,
}

impl FromStr for InputFormat {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "csv" => Ok(InputFormat::Csv),
            "jsonl" => Ok(InputFormat::Jsonl),
            other => Err(format!("unknown format `{other}` (expected csv or jsonl)")),
        }
    }
}

/// A corpus plus the number of rows rejected for having an empty caption.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ingested {
    pub corpus: Corpus,
    pub skipped: usize,
}

/// Columns accepted as the media identifier, highest priority first.
const MEDIA_ID_COLUMNS: [&str; 3] = ["media_id", "audiocap_id", "youtube_id"];

pub fn ingest_corpus(path: impl AsRef<Path>, format: InputFormat) -> Result<Ingested> {
    let path = path.as_ref();
    match format {
        InputFormat::Csv => ingest_csv(path),
        InputFormat::Jsonl => ingest_jsonl(path),
    }
}

fn ingest_csv(path: &Path) -> Result<Ingested> {
    let malformed = |line: u64, reason: String| Error::Malformed {
        path: path.to_path_buf(),
        line,
        reason,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => malformed(1, format!("{other:?}")),
        })?;

    let headers = reader.headers().map_err(|e| malformed(1, e.to_string()))?.clone();
    let column = |name: &str| headers.iter().position(|h| h.trim() == name);
    let media_col = MEDIA_ID_COLUMNS.iter().find_map(|c| column(c)).ok_or_else(|| {
        malformed(
            1,
            format!("header lacks a media id column (one of {MEDIA_ID_COLUMNS:?})"),
        )
    })?;
    let caption_col = column("caption").ok_or_else(|| malformed(1, "header lacks a `caption` column".into()))?;

    let mut builder = CorpusBuilder::default();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            malformed(line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let field = |i: usize, name: &str| {
            record
                .get(i)
                .map(str::to_string)
                .ok_or_else(|| malformed(line, format!("missing `{name}` field")))
        };
        let media_id = field(media_col, "media_id")?;
        if media_id.trim().is_empty() {
            return Err(malformed(line, "empty media id".into()));
        }
        let text = field(caption_col, "caption")?;
        builder.push(media_id.trim().to_string(), text);
    }
    Ok(Ingested {
        corpus: builder.corpus,
        skipped: builder.skipped,
    })
}

fn ingest_jsonl(path: &Path) -> Result<Ingested> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut builder = CorpusBuilder::default();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line_no = i as u64 + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let malformed = |reason: String| Error::Malformed {
            path: path.to_path_buf(),
            line: line_no,
            reason,
        };
        let value: serde_json::Value = serde_json::from_str(&line).map_err(|e| malformed(e.to_string()))?;
        let get = |name: &str| -> Result<String> {
            match value.get(name) {
                Some(serde_json::Value::String(s)) => Ok(s.clone()),
                Some(_) => Err(malformed(format!("field `{name}` is not a string"))),
                None => Err(malformed(format!("missing field `{name}`"))),
            }
        };
        let media_id = get("media_id")?;
        let text = get("caption")?;
        builder.push(media_id, text);
    }
    Ok(Ingested {
        corpus: builder.corpus,
        skipped: builder.skipped,
    })
}

/// Lowercase, strip punctuation, collapse whitespace.
pub fn normalize_caption(text: &str) -> String {
    text.chars()
        .map(|c| {
            if c.is_alphanumeric() || c.is_whitespace() {
                c
            } else {
                ' '
            }
        })
        .flat_map(char::to_lowercase)
        .collect::<String>()
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExactGroup {
    pub text: String,
    pub media_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CaptionRef {
    pub media_id: String,
    pub source_index: usize,
    pub caption: String,
}

impl From<&Caption> for CaptionRef {
    fn from(c: &Caption) -> Self {
        Self {
            media_id: c.media_id.clone(),
            source_index: c.source_index,
            caption: c.text.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NearPair {
    pub first: CaptionRef,
    pub second: CaptionRef,
    pub similarity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DuplicationReport {
    pub exact_groups: Vec<ExactGroup>,
    pub near_groups: Vec<NearPair>,
    pub corpus_size: usize,
    pub collision_rate: f64,
    pub near_threshold: f64,
    pub config_hash: String,
}

/// Finds captions shared by several media items (after normalization) and
/// pairs of captions on different media items whose content-word sets
/// overlap with Jaccard similarity at least `near_threshold`.
pub fn detect_many_to_one(corpus: &Corpus, near_threshold: f64, config: &TaggerConfig) -> Result<DuplicationReport> {
    if !(near_threshold > 0.0 && near_threshold <= 1.0) {
        return Err(Error::param(
            "near_threshold",
            format!("{near_threshold} is outside (0, 1]"),
        ));
    }
    if corpus.is_empty() {
        return Err(Error::param("corpus", "corpus is empty"));
    }
    let captions = corpus.captions();
    let normalized: Vec<String> = captions.iter().map(|c| normalize_caption(&c.text)).collect();

    let mut by_text: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, n) in normalized.iter().enumerate() {
        by_text.entry(n.as_str()).or_default().push(i);
    }
    let mut exact_groups = Vec::new();
    let mut colliding = 0usize;
    for (text, members) in &by_text {
        let mut media: Vec<String> = members.iter().map(|&i| captions[i].media_id.clone()).collect();
        media.sort();
        media.dedup();
        if media.len() >= 2 {
            colliding += members.len();
            exact_groups.push(ExactGroup {
                text: text.to_string(),
                media_ids: media,
            });
        }
    }

    let sets: Vec<_> = captions.iter().map(|c| content_word_set(&c.text, config)).collect();
    // Only pairs sharing at least one lemma can reach a positive threshold.
    let mut postings: HashMap<&str, Vec<usize>> = HashMap::new();
    for (i, s) in sets.iter().enumerate() {
        for lemma in s.iter() {
            postings.entry(lemma).or_default().push(i);
        }
    }
    let mut seen: HashSet<(usize, usize)> = HashSet::new();
    let mut near_groups = Vec::new();
    for list in postings.values() {
        for (x, &i) in list.iter().enumerate() {
            for &j in &list[x + 1..] {
                let key = (i.min(j), i.max(j));
                if !seen.insert(key) {
                    continue;
                }
                let (a, b) = (&captions[key.0], &captions[key.1]);
                if a.media_id == b.media_id || normalized[key.0] == normalized[key.1] {
                    continue;
                }
                let sim = jaccard_similarity(&sets[key.0], &sets[key.1]);
                if sim >= near_threshold {
                    let (first, second) = {
                        let (ra, rb) = (CaptionRef::from(a), CaptionRef::from(b));
                        if ra <= rb {
                            (ra, rb)
                        } else {
                            (rb, ra)
                        }
                    };
                    near_groups.push(NearPair {
                        first,
                        second,
                        similarity: sim,
                    });
                }
            }
        }
    }
    near_groups.sort_by(|p, q| {
        q.similarity
            .total_cmp(&p.similarity)
            .then_with(|| p.first.cmp(&q.first))
            .then_with(|| p.second.cmp(&q.second))
    });

    Ok(DuplicationReport {
        exact_groups,
        near_groups,
        corpus_size: captions.len(),
        collision_rate: colliding as f64 / captions.len() as f64,
        near_threshold,
        config_hash: config.config_hash(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GroundTruthRule {
    #[default]
    First,
    Longest,
}

impl FromStr for GroundTruthRule {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "first" => Ok(GroundTruthRule::First),
            "longest" => Ok(GroundTruthRule::Longest),
            other => Err(format!(
                "unknown ground-truth rule `{other}` (expected first or longest)"
            )),
        }
    }
}

impl fmt::Display for GroundTruthRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GroundTruthRule::First => "first",
            GroundTruthRule::Longest => "longest",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaptionGroup {
    pub ground_truth: Caption,
    pub candidates: Vec<Caption>,
}

impl CaptionGroup {
    pub fn media_id(&self) -> &str {
        &self.ground_truth.media_id
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Grouping {
    pub groups: Vec<CaptionGroup>,
    /// Media items with fewer than two captions.
    pub skipped: usize,
}

/// One group per media item with at least two captions, in first-encounter
/// order. Candidates keep their corpus order.
pub fn build_groups(corpus: &Corpus, rule: GroundTruthRule) -> Grouping {
    let mut order: Vec<&str> = Vec::new();
    let mut members: HashMap<&str, Vec<&Caption>> = HashMap::new();
    for c in corpus {
        members
            .entry(c.media_id.as_str())
            .or_insert_with(|| {
                order.push(c.media_id.as_str());
                Vec::new()
            })
            .push(c);
    }

    let mut groups = Vec::new();
    let mut skipped = 0;
    for media in order {
        let caps = &members[media];
        if caps.len() < 2 {
            skipped += 1;
            continue;
        }
        let gt = match rule {
            GroundTruthRule::First => caps.iter().position(|c| c.source_index == 0).unwrap_or(0),
            GroundTruthRule::Longest => {
                let mut best = 0;
                for (i, c) in caps.iter().enumerate() {
                    let (len, best_len) = (tokenize(&c.text).len(), tokenize(&caps[best].text).len());
                    if len > best_len || (len == best_len && c.source_index < caps[best].source_index) {
                        best = i;
                    }
                }
                best
            }
        };
        groups.push(CaptionGroup {
            ground_truth: caps[gt].clone(),
            candidates: caps
                .iter()
                .enumerate()
                .filter(|(i, _)| *i != gt)
                .map(|(_, c)| (*c).clone())
                .collect(),
        });
    }
    Grouping { groups, skipped }
}
