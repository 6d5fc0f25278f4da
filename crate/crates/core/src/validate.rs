//! Distance checks on generated paraphrases and per-configuration
//! similarity statistics.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::distance::normalized_distance;
use crate::error::{Error, Result};
use crate::llmclient::ParaphraseRecord;
use crate::textnorm::TaggerConfig;

pub const HISTOGRAM_BUCKETS: usize = 20;

/// Splits `records` into those whose realized distance is within `tolerance`
/// of their target and the rest. Order is preserved on both sides.
pub fn validate_records(
    records: &[ParaphraseRecord],
    tolerance: f64,
) -> Result<(Vec<ParaphraseRecord>, Vec<ParaphraseRecord>)> {
    if !(tolerance >= 0.0) {
        return Err(Error::param("tolerance", format!("{tolerance} is negative")));
    }
    Ok(records
        .iter()
        .cloned()
        .partition(|r| (r.realized_d - r.target_d).abs() <= tolerance))
}

/// A record whose stored distance disagrees with a fresh measurement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mismatch {
    pub position: usize,
    pub stored: f64,
    pub recomputed: f64,
}

/// Re-measures every record under `config`. Fails if any record was produced
/// under a different config hash.
pub fn recompute_distances(records: &[ParaphraseRecord], config: &TaggerConfig) -> Result<Vec<Mismatch>> {
    let hash = config.config_hash();
    if let Some((i, r)) = records.iter().enumerate().find(|(_, r)| r.config_hash != hash) {
        return Err(Error::Config(format!(
            "record {i} was measured under config {} but the current config is {hash}",
            r.config_hash
        )));
    }
    Ok(records
        .iter()
        .enumerate()
        .filter_map(|(i, r)| {
            let d = normalized_distance(&r.input_sentence, &r.output_sentence, r.metric, config).distance;
            ((d - r.realized_d).abs() > 1e-9).then_some(Mismatch {
                position: i,
                stored: r.realized_d,
                recomputed: d,
            })
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceStats {
    pub target_d: f64,
    pub n: usize,
    pub count: usize,
    pub mean_similarity: f64,
    pub std_similarity: f64,
    /// Counts over `[0, 1]` in buckets of width 0.05; 1.0 falls in the last.
    pub histogram: Vec<usize>,
}

fn bucket_of(similarity: f64) -> usize {
    ((similarity * HISTOGRAM_BUCKETS as f64) as usize).min(HISTOGRAM_BUCKETS - 1)
}

/// Mean and sample standard deviation of realized similarity
/// (`1 - realized_d`) per `(target_d, n)`, ordered by target then shots.
pub fn summarize(records: &[ParaphraseRecord]) -> Vec<DistanceStats> {
    let mut groups: BTreeMap<(u64, usize), Vec<f64>> = BTreeMap::new();
    for r in records {
        // non-negative floats order the same as their bit patterns
        let key = (r.target_d.max(0.0).to_bits(), r.n);
        groups.entry(key).or_default().push(1.0 - r.realized_d);
    }
    groups
        .into_iter()
        .map(|((bits, n), mut sims)| {
            // summation order must not depend on record order
            sims.sort_by(f64::total_cmp);
            let count = sims.len();
            let mean = sims.iter().sum::<f64>() / count as f64;
            let std = if count > 1 {
                (sims.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (count - 1) as f64).sqrt()
            } else {
                0.0
            };
            let mut histogram = vec![0; HISTOGRAM_BUCKETS];
            for s in &sims {
                histogram[bucket_of(*s)] += 1;
            }
            DistanceStats {
                target_d: f64::from_bits(bits),
                n,
                count,
                mean_similarity: mean,
                std_similarity: std,
                histogram,
            }
        })
        .collect()
}
