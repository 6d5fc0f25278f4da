//! Distance-indexed example pairs and seeded few-shot sampling.
//!
//! Every (ground truth, candidate) pair of every group is measured once and
//! kept in an index sorted by distance. Sampling picks `n` pairs whose
//! distance lies within a window around the requested target, topping up
//! with the nearest pairs outside the window when it runs short.

use std::cmp::Ordering;
use std::collections::HashSet;
use std::io::{BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::CaptionGroup;
use crate::distance::{normalized_distance, Metric};
use crate::error::{Error, Result};
use crate::textnorm::TaggerConfig;

pub const DEFAULT_TOLERANCE: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExamplePair {
    pub source: String,
    pub target: String,
    pub measured_distance: f64,
    pub media_id: String,
}

impl ExamplePair {
    fn order(&self, other: &Self) -> Ordering {
        self.measured_distance
            .total_cmp(&other.measured_distance)
            .then_with(|| self.media_id.cmp(&other.media_id))
            .then_with(|| self.source.cmp(&other.source))
            .then_with(|| self.target.cmp(&other.target))
    }
}

/// Summary written alongside the pair list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSummary {
    pub config_hash: String,
    pub metric: Metric,
    pub bucket_width: f64,
    pub pair_count: usize,
    pub histogram: Vec<Bucket>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bucket {
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterIndex {
    pairs: Vec<ExamplePair>,
    bucket_width: f64,
    metric: Metric,
    config_hash: String,
}

fn check_bucket_width(bucket_width: f64) -> Result<()> {
    if bucket_width > 0.0 && bucket_width <= 0.5 {
        Ok(())
    } else {
        Err(Error::param(
            "bucket_width",
            format!("{bucket_width} is outside (0, 0.5]"),
        ))
    }
}

impl ClusterIndex {
    /// Measures every (ground truth, candidate) pair. Pairs with identical
    /// source and target text are stored once.
    pub fn build(groups: &[CaptionGroup], metric: Metric, config: &TaggerConfig, bucket_width: f64) -> Result<Self> {
        check_bucket_width(bucket_width)?;
        if groups.is_empty() {
            return Err(Error::param("groups", "no caption groups to index"));
        }
        let mut pairs: Vec<ExamplePair> = groups
            .iter()
            .flat_map(|g| {
                g.candidates.iter().map(move |c| ExamplePair {
                    source: g.ground_truth.text.clone(),
                    target: c.text.clone(),
                    measured_distance: normalized_distance(&g.ground_truth.text, &c.text, metric, config).distance,
                    media_id: g.media_id().to_string(),
                })
            })
            .collect();
        Self::from_pairs_unchecked(&mut pairs, metric, config.config_hash(), bucket_width)
    }

    /// Rebuilds an index from stored pairs (e.g. read back from JSONL).
    pub fn from_pairs(mut pairs: Vec<ExamplePair>, summary: &ClusterSummary) -> Result<Self> {
        check_bucket_width(summary.bucket_width)?;
        if let Some(bad) = pairs.iter().find(|p| !(0.0..=1.0).contains(&p.measured_distance)) {
            return Err(Error::Data(format!(
                "pair distance {} is outside [0, 1]",
                bad.measured_distance
            )));
        }
        Self::from_pairs_unchecked(
            &mut pairs,
            summary.metric,
            summary.config_hash.clone(),
            summary.bucket_width,
        )
    }

    fn from_pairs_unchecked(
        pairs: &mut Vec<ExamplePair>,
        metric: Metric,
        config_hash: String,
        bucket_width: f64,
    ) -> Result<Self> {
        pairs.sort_by(ExamplePair::order);
        let mut seen = HashSet::new();
        pairs.retain(|p| seen.insert((p.source.clone(), p.target.clone())));
        Ok(Self {
            pairs: std::mem::take(pairs),
            bucket_width,
            metric,
            config_hash,
        })
    }

    pub fn pairs(&self) -> &[ExamplePair] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn metric(&self) -> Metric {
        self.metric
    }

    pub fn config_hash(&self) -> &str {
        &self.config_hash
    }

    pub fn bucket_width(&self) -> f64 {
        self.bucket_width
    }

    /// Pair counts per bucket of `bucket_width` over `[0, 1]`. A distance of
    /// exactly 1.0 lands in the last bucket.
    pub fn histogram(&self) -> Vec<Bucket> {
        let n_buckets = (1.0 / self.bucket_width).ceil() as usize;
        let mut buckets: Vec<Bucket> = (0..n_buckets)
            .map(|i| Bucket {
                lower: i as f64 * self.bucket_width,
                upper: ((i + 1) as f64 * self.bucket_width).min(1.0),
                count: 0,
            })
            .collect();
        for p in &self.pairs {
            let i = ((p.measured_distance / self.bucket_width) as usize).min(n_buckets - 1);
            buckets[i].count += 1;
        }
        buckets
    }

    pub fn summary(&self) -> ClusterSummary {
        ClusterSummary {
            config_hash: self.config_hash.clone(),
            metric: self.metric,
            bucket_width: self.bucket_width,
            pair_count: self.pairs.len(),
            histogram: self.histogram(),
        }
    }

    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<()> {
        for p in &self.pairs {
            serde_json::to_writer(&mut out, p)?;
            out.write_all(b"\n").map_err(|e| Error::io("<output>", e))?;
        }
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(input: R, summary: &ClusterSummary) -> Result<Self> {
        let mut pairs = Vec::new();
        for (i, line) in input.lines().enumerate() {
            let line = line.map_err(|e| Error::io("<clusters>", e))?;
            if line.trim().is_empty() {
                continue;
            }
            let pair: ExamplePair = serde_json::from_str(&line).map_err(|e| Error::Malformed {
                path: "<clusters>".into(),
                line: i as u64 + 1,
                reason: e.to_string(),
            })?;
            pairs.push(pair);
        }
        Self::from_pairs(pairs, summary)
    }
}

/// The outcome of one few-shot draw.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub pairs: Vec<ExamplePair>,
    /// How many pairs came from outside the tolerance window.
    pub filled: usize,
}

/// Draws `n` distinct pairs whose distance is within `tolerance` of
/// `target_d`, uniformly and without replacement under `seed`. When the
/// window holds fewer than `n` pairs, all of them are taken and the rest are
/// the pairs closest to `target_d` (ties: lower media id, then source text).
pub fn sample_examples(index: &ClusterIndex, target_d: f64, n: usize, tolerance: f64, seed: u64) -> Result<Sample> {
    if n == 0 {
        return Err(Error::param("n", "at least one example is required"));
    }
    if !(tolerance >= 0.0) {
        return Err(Error::param("tolerance", format!("{tolerance} is negative")));
    }
    if index.is_empty() {
        return Err(Error::param("index", "cluster index holds no pairs"));
    }
    if n > index.len() {
        return Err(Error::NotEnoughPairs {
            requested: n,
            available: index.len(),
        });
    }

    let gap = |p: &ExamplePair| (p.measured_distance - target_d).abs();
    let (mut window, mut outside): (Vec<&ExamplePair>, Vec<&ExamplePair>) =
        index.pairs.iter().partition(|p| gap(p) <= tolerance);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let take = n.min(window.len());
    // Partial Fisher-Yates: the first `take` slots become the sample.
    for i in 0..take {
        let j = rng.gen_range(i..window.len());
        window.swap(i, j);
    }
    let mut pairs: Vec<ExamplePair> = window[..take].iter().map(|p| (*p).clone()).collect();

    let filled = n - take;
    if filled > 0 {
        outside.sort_by(|a, b| {
            gap(a)
                .total_cmp(&gap(b))
                .then_with(|| a.media_id.cmp(&b.media_id))
                .then_with(|| a.source.cmp(&b.source))
                .then_with(|| a.target.cmp(&b.target))
        });
        pairs.extend(outside[..filled].iter().map(|p| (*p).clone()));
    }
    Ok(Sample { pairs, filled })
}
