//! Chat-completion backends and corpus-scale paraphrase generation.

pub mod http;
mod mock;

use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cluster::{sample_examples, ClusterIndex};
use crate::corpus::Corpus;
use crate::distance::{normalized_distance, Metric};
use crate::error::{Error, Result};
use crate::prompt::{PromptBundle, TemplateRegistry, DEFAULT_TEMPLATE_ID};
use crate::textnorm::TaggerConfig;

pub use mock::mock_paraphrase;

/// Environment variable holding the bearer token for the http backend.
pub const API_KEY_ENV: &str = "DISTPARA_API_KEY";

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("authentication rejected (HTTP {status})")]
    Auth { status: u16 },
    #[error("HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("request timed out")]
    Timeout,
    #[error("backend returned an empty completion")]
    EmptyCompletion,
    #[error("transport error: {0}")]
    Transport(String),
    #[error("malformed response: {0}")]
    MalformedResponse(String),
    #[error("backend misconfigured: {0}")]
    Config(String),
}

impl BackendError {
    pub fn is_retryable(&self) -> bool {
        match self {
            BackendError::Status { status, .. } => *status == 408 || *status == 429 || *status >= 500,
            BackendError::Timeout | BackendError::EmptyCompletion | BackendError::Transport(_) => true,
            BackendError::Auth { .. } | BackendError::MalformedResponse(_) | BackendError::Config(_) => false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Http,
    Mock,
}

impl FromStr for BackendKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "http" => Ok(BackendKind::Http),
            "mock" => Ok(BackendKind::Mock),
            other => Err(format!("unknown backend `{other}` (expected http or mock)")),
        }
    }
}

impl fmt::Display for BackendKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BackendKind::Http => "http",
            BackendKind::Mock => "mock",
        })
    }
}

#[derive(Clone)]
pub struct BackendConfig {
    pub kind: BackendKind,
    pub endpoint_url: Option<String>,
    pub model_name: String,
    pub temperature: f64,
    pub timeout: Duration,
    pub max_in_flight: usize,
    pub max_retries: u32,
    /// First backoff delay; doubles on every retry.
    pub backoff_base: Duration,
    pub api_key: Option<String>,
}

impl fmt::Debug for BackendConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BackendConfig")
            .field("kind", &self.kind)
            .field("endpoint_url", &self.endpoint_url)
            .field("model_name", &self.model_name)
            .field("temperature", &self.temperature)
            .field("timeout", &self.timeout)
            .field("max_in_flight", &self.max_in_flight)
            .field("max_retries", &self.max_retries)
            .field("backoff_base", &self.backoff_base)
            .field("api_key", &self.api_key.as_ref().map(|_| "<redacted>"))
            .finish()
    }
}

impl BackendConfig {
    pub fn mock() -> Self {
        Self {
            kind: BackendKind::Mock,
            endpoint_url: None,
            model_name: "mock".into(),
            temperature: 1.0,
            timeout: Duration::from_secs(60),
            max_in_flight: 4,
            max_retries: 2,
            backoff_base: Duration::from_secs(1),
            api_key: None,
        }
    }

    /// An http backend; the key is read from [`API_KEY_ENV`].
    pub fn http(endpoint_url: impl Into<String>, model_name: impl Into<String>) -> Self {
        Self {
            kind: BackendKind::Http,
            endpoint_url: Some(endpoint_url.into()),
            model_name: model_name.into(),
            api_key: std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty()),
            ..Self::mock()
        }
    }

    pub fn validate(&self) -> std::result::Result<(), BackendError> {
        if self.max_in_flight == 0 {
            return Err(BackendError::Config("max_in_flight must be at least 1".into()));
        }
        if !(self.temperature >= 0.0) {
            return Err(BackendError::Config("temperature must be non-negative".into()));
        }
        if self.kind == BackendKind::Http {
            if self.endpoint_url.as_deref().is_none_or(str::is_empty) {
                return Err(BackendError::Config("http backend needs an endpoint url".into()));
            }
            if self.api_key.is_none() {
                return Err(BackendError::Config(format!("{API_KEY_ENV} is not set")));
            }
        }
        Ok(())
    }
}

/// A completed chat call.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Completion {
    pub text: String,
    /// Requests made, including transport-level retries.
    pub requests: u32,
}

/// A ready-to-use backend. Build once and share across threads.
pub enum Backend {
    Mock,
    Http(http::HttpBackend, BackendConfig),
}

impl Backend {
    pub fn new(config: &BackendConfig) -> std::result::Result<Self, BackendError> {
        config.validate()?;
        Ok(match config.kind {
            BackendKind::Mock => Backend::Mock,
            BackendKind::Http => Backend::Http(http::HttpBackend::new(config)?, config.clone()),
        })
    }

    /// Runs one bundle. The mock ignores the message history and rewrites
    /// the final user sentence under `seed`; http ignores `seed`.
    pub fn complete(&self, bundle: &PromptBundle, seed: u64) -> std::result::Result<Completion, BackendError> {
        match self {
            Backend::Mock => {
                let text = mock_paraphrase(&bundle.input_sentence, bundle.target_d, seed);
                if text.trim().is_empty() {
                    return Err(BackendError::EmptyCompletion);
                }
                Ok(Completion { text, requests: 1 })
            }
            Backend::Http(client, config) => {
                let (text, requests) = client.complete(bundle, config)?;
                Ok(Completion { text, requests })
            }
        }
    }
}

/// One-shot convenience over [`Backend`].
pub fn complete_chat(
    bundle: &PromptBundle,
    config: &BackendConfig,
    seed: u64,
) -> std::result::Result<Completion, BackendError> {
    Backend::new(config)?.complete(bundle, seed)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationConfig {
    pub target_d: f64,
    pub n: usize,
    /// Half-width of the example-sampling window around `target_d`.
    pub tolerance: f64,
    pub seed: u64,
    /// Accept a generation when `|realized_d - target_d|` is within this.
    pub distance_tolerance: f64,
    pub template_id: String,
    pub per_caption: usize,
}

impl GenerationConfig {
    pub fn new(target_d: f64, n: usize, seed: u64) -> Self {
        Self {
            target_d,
            n,
            tolerance: crate::cluster::DEFAULT_TOLERANCE,
            seed,
            distance_tolerance: 0.1,
            template_id: DEFAULT_TEMPLATE_ID.into(),
            per_caption: 1,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.target_d) {
            return Err(Error::param("target_d", format!("{} is outside [0, 1]", self.target_d)));
        }
        if self.n == 0 {
            return Err(Error::param("n", "at least one shot is required"));
        }
        if !(self.tolerance >= 0.0) {
            return Err(Error::param("tolerance", "must be non-negative"));
        }
        if !(self.distance_tolerance >= 0.0) {
            return Err(Error::param("distance_tolerance", "must be non-negative"));
        }
        if self.per_caption == 0 {
            return Err(Error::param("per_caption", "must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParaphraseRecord {
    pub media_id: String,
    pub source_index: usize,
    pub input_sentence: String,
    pub target_d: f64,
    pub n: usize,
    pub template_id: String,
    pub output_sentence: String,
    pub metric: Metric,
    pub realized_d: f64,
    pub attempts: u32,
    /// Few-shot examples drawn from outside the tolerance window.
    pub filled: usize,
    pub backend_kind: BackendKind,
    pub model: String,
    pub temperature: f64,
    pub config_hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureRecord {
    pub media_id: String,
    pub source_index: usize,
    pub input_sentence: String,
    pub target_d: f64,
    pub n: usize,
    pub attempts: u32,
    pub error: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct GenerationOutput {
    pub records: Vec<ParaphraseRecord>,
    pub failures: Vec<FailureRecord>,
}

/// splitmix64 finalizer; derives independent per-job seeds.
fn mix_seed(seed: u64, job: u64, attempt: u64) -> u64 {
    let mut z = seed
        .wrapping_add(job.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(attempt.wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

enum JobOutcome {
    Done(ParaphraseRecord),
    Failed(FailureRecord),
}

struct Job<'a> {
    caption: &'a crate::corpus::Caption,
    index: u64,
}

struct Generator<'a> {
    index: &'a ClusterIndex,
    gen: &'a GenerationConfig,
    backend: &'a Backend,
    backend_config: &'a BackendConfig,
    tagger: &'a TaggerConfig,
    templates: &'a TemplateRegistry,
    config_hash: String,
}

impl Generator<'_> {
    fn run(&self, job: &Job) -> Result<JobOutcome> {
        let metric = self.index.metric();
        let mut best: Option<(ParaphraseRecord, f64)> = None;
        let mut last_error = None;
        let mut attempts = 0;
        for attempt in 0..=self.backend_config.max_retries {
            attempts = attempt + 1;
            let seed = mix_seed(self.gen.seed, job.index, attempt as u64);
            let sample = sample_examples(self.index, self.gen.target_d, self.gen.n, self.gen.tolerance, seed)?;
            let bundle = self.templates.assemble(
                &sample.pairs,
                &job.caption.text,
                self.gen.target_d,
                &self.gen.template_id,
            )?;
            let completion = match self.backend.complete(&bundle, seed) {
                Ok(c) => c,
                Err(e) => {
                    let fatal = !e.is_retryable();
                    last_error = Some(e);
                    if fatal {
                        break;
                    }
                    continue;
                }
            };
            let realized = normalized_distance(&job.caption.text, &completion.text, metric, self.tagger).distance;
            let miss = (realized - self.gen.target_d).abs();
            let record = ParaphraseRecord {
                media_id: job.caption.media_id.clone(),
                source_index: job.caption.source_index,
                input_sentence: job.caption.text.clone(),
                target_d: self.gen.target_d,
                n: self.gen.n,
                template_id: self.gen.template_id.clone(),
                output_sentence: completion.text,
                metric,
                realized_d: realized,
                attempts: 0,
                filled: sample.filled,
                backend_kind: self.backend_config.kind,
                model: self.backend_config.model_name.clone(),
                temperature: self.backend_config.temperature,
                config_hash: self.config_hash.clone(),
            };
            if best.as_ref().is_none_or(|(_, m)| miss < *m) {
                best = Some((record, miss));
            }
            if miss <= self.gen.distance_tolerance {
                break;
            }
        }
        Ok(match best {
            Some((mut record, _)) => {
                record.attempts = attempts;
                JobOutcome::Done(record)
            }
            None => JobOutcome::Failed(FailureRecord {
                media_id: job.caption.media_id.clone(),
                source_index: job.caption.source_index,
                input_sentence: job.caption.text.clone(),
                target_d: self.gen.target_d,
                n: self.gen.n,
                attempts,
                error: last_error.map_or_else(|| "no completion".to_string(), |e| e.to_string()),
            }),
        })
    }
}

/// Paraphrases every caption of `corpus` toward `gen.target_d`.
///
/// Each caption gets up to `max_retries + 1` attempts, each with a fresh
/// example sample; the attempt closest to the target distance is kept and
/// the loop stops early once one lands within `distance_tolerance`.
/// Records come back in corpus order regardless of completion order.
pub fn generate_paraphrases(
    corpus: &Corpus,
    index: &ClusterIndex,
    gen: &GenerationConfig,
    backend_config: &BackendConfig,
    tagger: &TaggerConfig,
    templates: &TemplateRegistry,
) -> Result<GenerationOutput> {
    gen.validate()?;
    let config_hash = tagger.config_hash();
    if index.config_hash() != config_hash {
        return Err(Error::Config(format!(
            "cluster index was built under config {} but the current tagger config is {}",
            index.config_hash(),
            config_hash
        )));
    }
    templates.get(&gen.template_id)?;
    if corpus.is_empty() {
        return Ok(GenerationOutput::default());
    }
    if gen.n > index.len() {
        return Err(Error::NotEnoughPairs {
            requested: gen.n,
            available: index.len(),
        });
    }
    let backend = Backend::new(backend_config)?;

    let jobs: Vec<Job> = corpus
        .iter()
        .flat_map(|c| std::iter::repeat_n(c, gen.per_caption))
        .enumerate()
        .map(|(i, caption)| Job {
            caption,
            index: i as u64,
        })
        .collect();

    let generator = Generator {
        index,
        gen,
        backend: &backend,
        backend_config,
        tagger,
        templates,
        config_hash,
    };
    let slots: Vec<Mutex<Option<Result<JobOutcome>>>> = jobs.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let workers = backend_config.max_in_flight.min(jobs.len());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(job) = jobs.get(i) else { break };
                let outcome = generator.run(job);
                *slots[i].lock().unwrap() = Some(outcome);
            });
        }
    });

    let mut out = GenerationOutput::default();
    for slot in slots {
        match slot.into_inner().unwrap().expect("every job runs") {
            Ok(JobOutcome::Done(r)) => out.records.push(r),
            Ok(JobOutcome::Failed(f)) => out.failures.push(f),
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}
