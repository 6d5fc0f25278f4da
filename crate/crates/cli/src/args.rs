use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use distpara::corpus::{GroundTruthRule, InputFormat};
use distpara::distance::Metric;
use distpara::llmclient::BackendKind;
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(
    name = "distpara",
    version,
    about = "Distance-controlled caption paraphrasing toolkit"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Read a caption file (csv or jsonl) and write a normalized corpus as JSONL.
    Ingest(IngestArgs),
    /// Report captions shared across media items and near-duplicate pairs.
    Analyze(AnalyzeArgs),
    /// Measure ground-truth/candidate distances and write the example index.
    Cluster(ClusterArgs),
    /// Paraphrase every caption toward a target distance with few-shot prompts.
    Generate(GenerateArgs),
    /// Split paraphrases by distance tolerance and re-check stored distances.
    Validate(ValidateArgs),
    /// Per-(distance, shots) similarity statistics.
    Stats(StatsArgs),
    /// Contrastive-retrieval simulation of caption duplication.
    Simulate(SimulateArgs),
}

/// Options shared by every subcommand that measures content words.
#[derive(Debug, Clone, Args, Serialize)]
pub struct TaggerArgs {
    /// `word<TAB>tag` lexicon (tags: noun, verb, other); overrides the heuristic tagger.
    #[arg(long)]
    pub lexicon: Option<PathBuf>,
    /// Stopword list, one word per line; replaces the built-in list.
    #[arg(long)]
    pub stopwords: Option<PathBuf>,
    /// Disable suffix-based verb detection.
    #[arg(long)]
    pub no_suffix_rules: bool,
    /// Keep surface forms instead of lemmas.
    #[arg(long)]
    pub no_lemmatize: bool,
}

#[derive(Debug, Args, Serialize)]
pub struct IngestArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value = "csv")]
    pub format: InputFormat,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct AnalyzeArgs {
    /// Corpus JSONL written by `ingest`.
    #[arg(long)]
    pub corpus: PathBuf,
    /// Where to write the duplication report (JSON).
    #[arg(long)]
    pub report: PathBuf,
    /// Minimum content-word Jaccard similarity for a near-duplicate pair.
    #[arg(long, default_value_t = 0.8)]
    pub near_threshold: f64,
    #[command(flatten)]
    pub tagger: TaggerArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct ClusterArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long, default_value = "jaccard")]
    pub metric: Metric,
    /// Histogram bucket width, in (0, 0.5].
    #[arg(long, default_value_t = 0.05)]
    pub bucket_width: f64,
    /// How to pick the ground-truth caption of each media item.
    #[arg(long, default_value = "first")]
    pub ground_truth: GroundTruthRule,
    /// Example index JSONL; the histogram summary goes to `<stem>.summary.json`.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub tagger: TaggerArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct GenerateArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// Example index written by `cluster`.
    #[arg(long)]
    pub clusters: PathBuf,
    /// Target normalized distance in [0, 1].
    #[arg(long)]
    pub distance: f64,
    /// Number of few-shot examples per prompt.
    #[arg(long)]
    pub shots: usize,
    #[arg(long)]
    pub seed: u64,
    /// Half-width of the example window around the target distance.
    #[arg(long, default_value_t = distpara::cluster::DEFAULT_TOLERANCE)]
    pub tolerance: f64,
    /// Retry when the realized distance misses the target by more than this.
    #[arg(long, default_value_t = 0.1)]
    pub distance_tolerance: f64,
    #[arg(long, default_value = distpara::prompt::DEFAULT_TEMPLATE_ID)]
    pub template: String,
    /// Directory of extra `<id>.txt` templates.
    #[arg(long)]
    pub template_dir: Option<PathBuf>,
    #[arg(long, default_value = "mock")]
    pub backend: BackendKind,
    /// Base URL of a chat-completion server (http backend).
    #[arg(long)]
    pub endpoint: Option<String>,
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long, default_value_t = 1.0)]
    pub temperature: f64,
    /// Request timeout in seconds.
    #[arg(long, default_value_t = 60.0)]
    pub timeout: f64,
    #[arg(long, default_value_t = 4)]
    pub max_in_flight: usize,
    #[arg(long, default_value_t = 2)]
    pub max_retries: u32,
    /// Paraphrases per caption.
    #[arg(long, default_value_t = 1)]
    pub per_caption: usize,
    /// Paraphrase records JSONL; failures go to `<stem>.failures.jsonl`.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub tagger: TaggerArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct ValidateArgs {
    /// Paraphrase records written by `generate`.
    #[arg(long)]
    pub records: PathBuf,
    #[arg(long, default_value_t = 0.1)]
    pub tolerance: f64,
    /// Accepted records; rejected ones go to `<stem>.rejected.jsonl`.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub tagger: TaggerArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct StatsArgs {
    /// One or more paraphrase record files.
    #[arg(long, required = true, num_args = 1..)]
    pub records: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct SimulateArgs {
    /// Comma-separated seeds; at least two.
    #[arg(long, required = true, value_delimiter = ',')]
    pub seeds: Vec<u64>,
    #[arg(long, default_value_t = 200)]
    pub items: usize,
    #[arg(long, default_value_t = 32)]
    pub dim: usize,
    #[arg(long, default_value_t = distpara::contrastive::DEFAULT_TEMPERATURE)]
    pub temperature: f64,
    #[arg(long, default_value_t = 1e-2)]
    pub lr: f64,
    #[arg(long, default_value_t = 200)]
    pub epochs: usize,
    /// Minibatch size; omit for full-batch training.
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Use the standard loss whose denominator also counts the positive pair.
    #[arg(long)]
    pub include_positive_in_denominator: bool,
    #[arg(long)]
    pub out: PathBuf,
}
