//! Desk-scale contrastive retrieval: the NT-Xent objective over cosine
//! similarities, its analytic gradient, a linear dual-encoder trained by
//! full-batch gradient descent on synthetic data, and recall@k.
//!
//! The default loss variant leaves the positive pair out of the softmax
//! denominator:
//!
//! ```text
//! L = -1/N Σ_i [ log( e^{s_ii} / Σ_{j≠i} e^{s_ij} ) + log( e^{s_ii} / Σ_{j≠i} e^{s_ji} ) ]
//! ```
//!
//! with `s_ij = cos(A_i, T_j) / τ`. [`LossVariant::IncludePositive`] gives
//! the usual form where the denominator runs over all `j`.

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `N × D`, one embedding per row.
pub type EmbeddingMatrix = Array2<f64>;

pub const DEFAULT_TEMPERATURE: f64 = 0.07;
const AUDIO_NOISE: f64 = 0.3;
const CAPTION_PERTURBATION: f64 = 0.1;
const ITEMS_PER_CAPTION: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossVariant {
    #[default]
    ExcludePositive,
    IncludePositive,
}

pub fn cosine_sim(u: ArrayView1<f64>, v: ArrayView1<f64>) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::param(
            "v",
            format!("length {} does not match {}", v.len(), u.len()),
        ));
    }
    let nu = u.dot(&u).sqrt();
    let nv = v.dot(&v).sqrt();
    if !(nu > 0.0 && nv > 0.0 && nu.is_finite() && nv.is_finite()) {
        return Err(Error::param("u/v", "cosine similarity is undefined for a zero vector"));
    }
    Ok((u.dot(&v) / (nu * nv)).clamp(-1.0, 1.0))
}

fn check_pair(a: &EmbeddingMatrix, t: &EmbeddingMatrix, tau: f64) -> Result<()> {
    if a.dim() != t.dim() {
        return Err(Error::param(
            "T",
            format!("shape {:?} does not match A {:?}", t.dim(), a.dim()),
        ));
    }
    if a.nrows() < 2 {
        return Err(Error::param("A", "at least two rows are required"));
    }
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(Error::param("tau", format!("{tau} is not a positive temperature")));
    }
    if a.iter().chain(t.iter()).any(|x| !x.is_finite()) {
        return Err(Error::param("A/T", "embeddings contain non-finite values"));
    }
    Ok(())
}

/// Rows scaled to unit length, plus the original norms.
fn normalize_rows(m: &EmbeddingMatrix) -> Result<(Array2<f64>, Array1<f64>)> {
    let norms: Array1<f64> = m.map_axis(Axis(1), |r| r.dot(&r).sqrt());
    if norms.iter().any(|n| !(*n > 0.0 && n.is_finite())) {
        return Err(Error::param("embeddings", "row norm is zero or not finite"));
    }
    let unit = m / &norms.view().insert_axis(Axis(1));
    Ok((unit, norms))
}

/// `N × N` matrix of `cos(A_i, T_j)`.
pub fn cosine_matrix(a: &EmbeddingMatrix, t: &EmbeddingMatrix) -> Result<Array2<f64>> {
    let (ua, _) = normalize_rows(a)?;
    let (ut, _) = normalize_rows(t)?;
    Ok(ua.dot(&ut.t()))
}

fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    max + values.map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Loss and `dL/dlogits` for an `N × N` logit matrix whose diagonal holds
/// the positive pairs.
pub fn loss_from_logits(logits: &Array2<f64>, variant: LossVariant) -> (f64, Array2<f64>) {
    let n = logits.nrows();
    let in_denominator = |i: usize, j: usize| variant == LossVariant::IncludePositive || i != j;
    let mut loss = 0.0;
    let mut grad = Array2::<f64>::zeros((n, n));
    let scale = 1.0 / n as f64;

    for i in 0..n {
        // audio i against every caption j
        let row = (0..n).filter(|&j| in_denominator(i, j)).map(|j| logits[[i, j]]);
        let row_lse = log_sum_exp(row);
        // caption i against every audio j
        let col = (0..n).filter(|&j| in_denominator(j, i)).map(|j| logits[[j, i]]);
        let col_lse = log_sum_exp(col);
        loss -= 2.0 * logits[[i, i]] - row_lse - col_lse;

        grad[[i, i]] -= 2.0 * scale;
        for j in 0..n {
            if in_denominator(i, j) {
                grad[[i, j]] += scale * (logits[[i, j]] - row_lse).exp();
            }
            if in_denominator(j, i) {
                grad[[j, i]] += scale * (logits[[j, i]] - col_lse).exp();
            }
        }
    }
    (loss * scale, grad)
}

pub fn nt_xent_loss(a: &EmbeddingMatrix, t: &EmbeddingMatrix, tau: f64, variant: LossVariant) -> Result<f64> {
    check_pair(a, t, tau)?;
    let logits = cosine_matrix(a, t)? / tau;
    Ok(loss_from_logits(&logits, variant).0)
}

/// Loss value with analytic gradients with respect to every entry of `A`
/// and `T`.
#[derive(Debug, Clone, PartialEq)]
pub struct LossGrad {
    pub loss: f64,
    pub grad_a: Array2<f64>,
    pub grad_t: Array2<f64>,
}

pub fn nt_xent_grad(a: &EmbeddingMatrix, t: &EmbeddingMatrix, tau: f64, variant: LossVariant) -> Result<LossGrad> {
    check_pair(a, t, tau)?;
    let (ua, na) = normalize_rows(a)?;
    let (ut, nt) = normalize_rows(t)?;
    let logits = ua.dot(&ut.t()) / tau;
    let (loss, g) = loss_from_logits(&logits, variant);

    // gradients with respect to the unit vectors
    let g_ua = g.dot(&ut) / tau;
    let g_ut = g.t().dot(&ua) / tau;
    Ok(LossGrad {
        loss,
        grad_a: through_normalization(&g_ua, &ua, &na),
        grad_t: through_normalization(&g_ut, &ut, &nt),
    })
}

/// Chain rule through `x ↦ x / ‖x‖`: `(g - (g·u)u) / ‖x‖` per row.
fn through_normalization(g_unit: &Array2<f64>, unit: &Array2<f64>, norms: &Array1<f64>) -> Array2<f64> {
    let mut out = g_unit.clone();
    for ((mut row, u), n) in out.rows_mut().into_iter().zip(unit.rows()).zip(norms.iter()) {
        let radial = row.dot(&u);
        row.scaled_add(-radial, &u);
        row /= *n;
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Duplication {
    /// Four audio items share each caption vector.
    ManyToOne,
    /// Every audio item has its own caption vector.
    Unique,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyDataset {
    pub audio_vectors: Array2<f64>,
    pub caption_ids: Vec<usize>,
    pub caption_vectors: Array2<f64>,
}

impl ToyDataset {
    pub fn len(&self) -> usize {
        self.caption_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.caption_ids.is_empty()
    }

    pub fn distinct_captions(&self) -> usize {
        self.caption_vectors.nrows()
    }

    /// One caption row per audio item.
    pub fn caption_rows(&self) -> Array2<f64> {
        self.caption_vectors.select(Axis(0), &self.caption_ids)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        for x in self.audio_vectors.iter().chain(self.caption_vectors.iter()) {
            out.extend_from_slice(&x.to_le_bytes());
        }
        for id in &self.caption_ids {
            out.extend_from_slice(&(*id as u64).to_le_bytes());
        }
        out
    }
}

fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || StandardNormal.sample(rng))
}

/// Synthetic paired data. Items come in blocks of four around a shared
/// caption centroid; audio vectors are `centroid + 0.3·noise`.
///
/// In `unique` mode each item's caption is `centroid + 0.1·p` with
/// `p = (noise + fresh) / √2`, i.e. a per-coordinate σ = 0.1 perturbation
/// that partly follows the item's own audio noise, so a paraphrased caption
/// still says something specific about its audio. Audio vectors are the same
/// in both modes for a given seed.
pub fn synth_dataset(seed: u64, items: usize, dim: usize, duplication: Duplication) -> Result<ToyDataset> {
    if items < ITEMS_PER_CAPTION {
        return Err(Error::param("items", format!("{items} is below {ITEMS_PER_CAPTION}")));
    }
    if !items.is_multiple_of(ITEMS_PER_CAPTION) {
        return Err(Error::param(
            "items",
            format!("{items} is not divisible by {ITEMS_PER_CAPTION}"),
        ));
    }
    if dim < 2 {
        return Err(Error::param("dim", "at least two dimensions are required"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let groups = items / ITEMS_PER_CAPTION;
    let centroids = gaussian(&mut rng, groups, dim);
    let noise = gaussian(&mut rng, items, dim);
    let fresh = gaussian(&mut rng, items, dim);
    let group_of: Vec<usize> = (0..items).map(|i| i / ITEMS_PER_CAPTION).collect();
    let audio_vectors = centroids.select(Axis(0), &group_of) + &(&noise * AUDIO_NOISE);

    Ok(match duplication {
        Duplication::ManyToOne => ToyDataset {
            audio_vectors,
            caption_ids: group_of,
            caption_vectors: centroids,
        },
        Duplication::Unique => {
            let perturbation = (&noise + &fresh) * (CAPTION_PERTURBATION / 2f64.sqrt());
            ToyDataset {
                audio_vectors,
                caption_ids: (0..items).collect(),
                caption_vectors: centroids.select(Axis(0), &group_of) + &perturbation,
            }
        }
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContrastiveConfig {
    pub temperature: f64,
    /// Batch size; anything at or above the dataset size means full batch.
    pub batch_size: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    /// Shuffles minibatch membership when `batch_size` is below the dataset size.
    pub seed: u64,
    pub variant: LossVariant,
}

impl Default for ContrastiveConfig {
    fn default() -> Self {
        Self {
            temperature: DEFAULT_TEMPERATURE,
            batch_size: usize::MAX,
            learning_rate: 1e-2,
            epochs: 200,
            seed: 0,
            variant: LossVariant::ExcludePositive,
        }
    }
}

impl ContrastiveConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.temperature > 0.0) {
            return Err(Error::param("temperature", "must be positive"));
        }
        if self.batch_size < 2 {
            return Err(Error::param("batch_size", "must be at least 2"));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::param("learning_rate", "must be positive"));
        }
        Ok(())
    }
}

/// Linear projections applied to audio and caption vectors (`x ↦ x·W`).
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedEncoders {
    pub audio: Array2<f64>,
    pub text: Array2<f64>,
    /// Full-dataset loss before training, then after each epoch.
    pub loss_trace: Vec<f64>,
}

impl TrainedEncoders {
    pub fn encode(&self, data: &ToyDataset) -> (EmbeddingMatrix, EmbeddingMatrix) {
        (data.audio_vectors.dot(&self.audio), data.caption_rows().dot(&self.text))
    }
}

fn batches(items: usize, batch_size: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    if batch_size >= items {
        return vec![(0..items).collect()];
    }
    let mut order: Vec<usize> = (0..items).collect();
    order.shuffle(rng);
    let mut out: Vec<Vec<usize>> = order.chunks(batch_size).map(<[usize]>::to_vec).collect();
    if out.len() > 1 && out.last().is_some_and(|b| b.len() < 2) {
        let tail = out.pop().unwrap();
        out.last_mut().unwrap().extend(tail);
    }
    out
}

/// Gradient descent on the contrastive loss of linearly projected audio and
/// caption vectors, starting from identity projections. `epochs = 0`
/// returns the initialization.
pub fn train_toy(data: &ToyDataset, cfg: &ContrastiveConfig) -> Result<TrainedEncoders> {
    cfg.validate()?;
    let dim = data.audio_vectors.ncols();
    let audio_in = &data.audio_vectors;
    let text_in = data.caption_rows();
    let mut enc = TrainedEncoders {
        audio: Array2::eye(dim),
        text: Array2::eye(dim),
        loss_trace: Vec::with_capacity(cfg.epochs + 1),
    };
    let full_loss = |enc: &TrainedEncoders| {
        nt_xent_loss(
            &audio_in.dot(&enc.audio),
            &text_in.dot(&enc.text),
            cfg.temperature,
            cfg.variant,
        )
    };
    enc.loss_trace.push(full_loss(&enc)?);

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    for epoch in 1..=cfg.epochs {
        for batch in batches(data.len(), cfg.batch_size, &mut rng) {
            let xa = audio_in.select(Axis(0), &batch);
            let xt = text_in.select(Axis(0), &batch);
            let lg = nt_xent_grad(&xa.dot(&enc.audio), &xt.dot(&enc.text), cfg.temperature, cfg.variant)
                .map_err(|_| Error::Diverged { epoch })?;
            enc.audio.scaled_add(-cfg.learning_rate, &xa.t().dot(&lg.grad_a));
            enc.text.scaled_add(-cfg.learning_rate, &xt.t().dot(&lg.grad_t));
        }
        let loss = full_loss(&enc).map_err(|_| Error::Diverged { epoch })?;
        if !loss.is_finite() {
            return Err(Error::Diverged { epoch });
        }
        enc.loss_trace.push(loss);
    }
    Ok(enc)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    TextToAudio,
    AudioToText,
}

/// Fraction of queries whose counterpart (same row index) ranks in the top
/// `k` by cosine similarity. Equal scores rank the lower index first.
pub fn recall_at_k(a: &EmbeddingMatrix, t: &EmbeddingMatrix, k: usize, direction: Direction) -> Result<f64> {
    if a.dim() != t.dim() {
        return Err(Error::param(
            "T",
            format!("shape {:?} does not match A {:?}", t.dim(), a.dim()),
        ));
    }
    let n = a.nrows();
    if k < 1 || k > n {
        return Err(Error::param("k", format!("{k} is outside 1..={n}")));
    }
    let sims = cosine_matrix(a, t)?;
    // rows: queries, columns: gallery
    let scores = match direction {
        Direction::AudioToText => sims,
        Direction::TextToAudio => sims.reversed_axes(),
    };
    let hits = scores
        .rows()
        .into_iter()
        .enumerate()
        .filter(|(q, row)| {
            let own = row[*q];
            let rank = row
                .iter()
                .enumerate()
                .filter(|(j, s)| **s > own || (**s == own && j < q))
                .count();
            rank < k
        })
        .count();
    Ok(hits as f64 / n as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RetrievalMetrics {
    pub t2a_r1: f64,
    pub t2a_r5: f64,
    pub a2t_r1: f64,
    pub a2t_r5: f64,
    pub final_loss: f64,
}

impl RetrievalMetrics {
    fn mean(all: &[RetrievalMetrics]) -> Self {
        let n = all.len() as f64;
        let avg = |f: fn(&RetrievalMetrics) -> f64| all.iter().map(f).sum::<f64>() / n;
        Self {
            t2a_r1: avg(|m| m.t2a_r1),
            t2a_r5: avg(|m| m.t2a_r5),
            a2t_r1: avg(|m| m.a2t_r1),
            a2t_r5: avg(|m| m.a2t_r5),
            final_loss: avg(|m| m.final_loss),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub seed: u64,
    pub many_to_one: RetrievalMetrics,
    pub unique: RetrievalMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub items: usize,
    pub dim: usize,
    pub config: ContrastiveConfig,
    pub per_seed: Vec<SeedResult>,
    pub mean_many_to_one: RetrievalMetrics,
    pub mean_unique: RetrievalMetrics,
    /// Seeds where unique captions beat shared ones on R@1 in both directions.
    pub unique_wins: usize,
}

fn evaluate(data: &ToyDataset, cfg: &ContrastiveConfig) -> Result<RetrievalMetrics> {
    let enc = train_toy(data, cfg)?;
    let (a, t) = enc.encode(data);
    let k5 = 5.min(data.len());
    Ok(RetrievalMetrics {
        t2a_r1: recall_at_k(&a, &t, 1, Direction::TextToAudio)?,
        t2a_r5: recall_at_k(&a, &t, k5, Direction::TextToAudio)?,
        a2t_r1: recall_at_k(&a, &t, 1, Direction::AudioToText)?,
        a2t_r5: recall_at_k(&a, &t, k5, Direction::AudioToText)?,
        final_loss: *enc.loss_trace.last().unwrap(),
    })
}

/// Trains on shared-caption and unique-caption variants of the same audio
/// vectors for every seed and reports recall in both directions. Seeds run
/// in parallel; results keep seed order.
pub fn run_simulation(seeds: &[u64], items: usize, dim: usize, cfg: &ContrastiveConfig) -> Result<SimulationReport> {
    if seeds.len() < 2 {
        return Err(Error::param("seeds", "at least two seeds are required"));
    }
    cfg.validate()?;
    let per_seed: Vec<SeedResult> = seeds
        .par_iter()
        .map(|&seed| -> Result<SeedResult> {
            let shared = synth_dataset(seed, items, dim, Duplication::ManyToOne)?;
            let unique = synth_dataset(seed, items, dim, Duplication::Unique)?;
            Ok(SeedResult {
                seed,
                many_to_one: evaluate(&shared, cfg)?,
                unique: evaluate(&unique, cfg)?,
            })
        })
        .collect::<Result<_>>()?;

    let m2o: Vec<_> = per_seed.iter().map(|r| r.many_to_one).collect();
    let uni: Vec<_> = per_seed.iter().map(|r| r.unique).collect();
    let unique_wins = per_seed
        .iter()
        .filter(|r| r.unique.t2a_r1 > r.many_to_one.t2a_r1 && r.unique.a2t_r1 > r.many_to_one.a2t_r1)
        .count();
    Ok(SimulationReport {
        items,
        dim,
        config: cfg.clone(),
        mean_many_to_one: RetrievalMetrics::mean(&m2o),
        mean_unique: RetrievalMetrics::mean(&uni),
        per_seed,
        unique_wins,
    })
}
