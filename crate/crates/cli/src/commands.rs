use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{bail, Context, Result};
use distpara::cluster::{ClusterIndex, ClusterSummary};
use distpara::contrastive::{run_simulation, ContrastiveConfig, LossVariant};
use distpara::corpus::{build_groups, detect_many_to_one, ingest_corpus, Corpus, InputFormat};
use distpara::llmclient::{generate_paraphrases, BackendConfig, BackendKind, GenerationConfig, ParaphraseRecord};
use distpara::prompt::TemplateRegistry;
use distpara::textnorm::TaggerConfig;
use distpara::validate::{recompute_distances, summarize, validate_records};
use log::{info, warn};
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::args::*;
use crate::manifest::{sidecar, RunManifest};
use crate::UsageError;

/// Some captions could not be paraphrased; their errors are in the failures file.
#[derive(Debug)]
pub struct GenerationFailures {
    pub count: usize,
    pub path: PathBuf,
}

impl std::fmt::Display for GenerationFailures {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} caption(s) failed; see {}", self.count, self.path.display())
    }
}

impl std::error::Error for GenerationFailures {}

fn tagger(args: &TaggerArgs) -> Result<TaggerConfig> {
    let mut cfg = TaggerConfig::default();
    if let Some(path) = &args.stopwords {
        cfg = cfg.with_stopword_file(path)?;
    }
    if let Some(path) = &args.lexicon {
        cfg = cfg.with_lexicon_file(path)?;
    }
    Ok(cfg
        .with_suffix_rules(!args.no_suffix_rules)
        .with_lemmatization(!args.no_lemmatize))
}

/// Refuses to write over any of the inputs.
fn guard_output(out: &Path, inputs: &[&Path]) -> Result<()> {
    let Ok(out_real) = out.canonicalize() else {
        return Ok(());
    };
    for input in inputs {
        if input.canonicalize().is_ok_and(|p| p == out_real) {
            return Err(UsageError(format!("output {} would overwrite an input file", out.display())).into());
        }
    }
    Ok(())
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut out = create(path)?;
    serde_json::to_writer_pretty(&mut out, value)?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let mut out = create(path)?;
    for item in items {
        serde_json::to_writer(&mut out, item)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path).map_err(|e| distpara::Error::io(path, e))?;
    let mut items = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| distpara::Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let item = serde_json::from_str(&line).map_err(|e| distpara::Error::Malformed {
            path: path.to_path_buf(),
            line: i as u64 + 1,
            reason: e.to_string(),
        })?;
        items.push(item);
    }
    Ok(items)
}

fn load_corpus(path: &Path) -> Result<Corpus> {
    let ingested = ingest_corpus(path, InputFormat::Jsonl)?;
    if ingested.skipped > 0 {
        warn!("{}: skipped {} empty caption(s)", path.display(), ingested.skipped);
    }
    Ok(ingested.corpus)
}

pub fn ingest(args: &IngestArgs) -> Result<()> {
    guard_output(&args.out, &[&args.input])?;
    let ingested = ingest_corpus(&args.input, args.format)?;
    let mut out = create(&args.out)?;
    ingested.corpus.write_jsonl(&mut out)?;
    out.flush()?;
    info!(
        "ingested {} caption(s), skipped {} empty",
        ingested.corpus.len(),
        ingested.skipped
    );
    RunManifest::new("ingest", args, None)?.write_beside(&args.out)?;
    Ok(())
}

pub fn analyze(args: &AnalyzeArgs) -> Result<()> {
    guard_output(&args.report, &[&args.corpus])?;
    let cfg = tagger(&args.tagger)?;
    let corpus = load_corpus(&args.corpus)?;
    let report = detect_many_to_one(&corpus, args.near_threshold, &cfg)?;
    write_json(&args.report, &report)?;
    info!(
        "{} exact group(s), {} near pair(s), collision rate {:.4}",
        report.exact_groups.len(),
        report.near_groups.len(),
        report.collision_rate
    );
    RunManifest::new("analyze", args, Some(cfg.config_hash()))?.write_beside(&args.report)?;
    Ok(())
}

pub fn cluster(args: &ClusterArgs) -> Result<()> {
    guard_output(&args.out, &[&args.corpus])?;
    let cfg = tagger(&args.tagger)?;
    let corpus = load_corpus(&args.corpus)?;
    let grouping = build_groups(&corpus, args.ground_truth);
    if grouping.skipped > 0 {
        info!("{} media item(s) with a single caption skipped", grouping.skipped);
    }
    let index = ClusterIndex::build(&grouping.groups, args.metric, &cfg, args.bucket_width)?;
    let mut out = create(&args.out)?;
    index.write_jsonl(&mut out)?;
    out.flush()?;
    write_json(&sidecar(&args.out, "summary.json"), &index.summary())?;
    info!(
        "{} example pair(s) from {} group(s)",
        index.len(),
        grouping.groups.len()
    );
    RunManifest::new("cluster", args, Some(cfg.config_hash()))?.write_beside(&args.out)?;
    Ok(())
}

fn load_index(path: &Path) -> Result<ClusterIndex> {
    let summary_path = sidecar(path, "summary.json");
    let summary: ClusterSummary = serde_json::from_reader(BufReader::new(
        File::open(&summary_path).map_err(|e| distpara::Error::io(&summary_path, e))?,
    ))
    .with_context(|| format!("reading {}", summary_path.display()))?;
    let file = File::open(path).map_err(|e| distpara::Error::io(path, e))?;
    ClusterIndex::read_jsonl(BufReader::new(file), &summary).with_context(|| format!("reading {}", path.display()))
}

fn backend_config(args: &GenerateArgs) -> Result<BackendConfig> {
    if !(args.timeout > 0.0 && args.timeout.is_finite()) {
        return Err(UsageError("--timeout must be a positive number of seconds".into()).into());
    }
    let mut cfg = match args.backend {
        BackendKind::Mock => BackendConfig::mock(),
        BackendKind::Http => {
            let Some(endpoint) = &args.endpoint else {
                return Err(UsageError("--endpoint is required with --backend http".into()).into());
            };
            let Some(model) = &args.model else {
                return Err(UsageError("--model is required with --backend http".into()).into());
            };
            BackendConfig::http(endpoint.clone(), model.clone())
        }
    };
    if let Some(model) = &args.model {
        cfg.model_name = model.clone();
    }
    cfg.temperature = args.temperature;
    cfg.timeout = Duration::from_secs_f64(args.timeout);
    cfg.max_in_flight = args.max_in_flight;
    cfg.max_retries = args.max_retries;
    Ok(cfg)
}

pub fn generate(args: &GenerateArgs) -> Result<()> {
    guard_output(&args.out, &[&args.corpus, &args.clusters])?;
    let cfg = tagger(&args.tagger)?;
    let mut templates = TemplateRegistry::default();
    if let Some(dir) = &args.template_dir {
        templates.load_dir(dir)?;
    }
    let backend = backend_config(args)?;
    let corpus = load_corpus(&args.corpus)?;
    let index = load_index(&args.clusters)?;
    let gen = GenerationConfig {
        target_d: args.distance,
        n: args.shots,
        tolerance: args.tolerance,
        seed: args.seed,
        distance_tolerance: args.distance_tolerance,
        template_id: args.template.clone(),
        per_caption: args.per_caption,
    };
    let output = generate_paraphrases(&corpus, &index, &gen, &backend, &cfg, &templates)?;
    write_jsonl(&args.out, &output.records)?;
    let failures_path = sidecar(&args.out, "failures.jsonl");
    write_jsonl(&failures_path, &output.failures)?;
    let filled: usize = output.records.iter().map(|r| r.filled).sum();
    info!(
        "{} paraphrase(s), {} failure(s), {} example slot(s) filled outside the window",
        output.records.len(),
        output.failures.len(),
        filled
    );
    RunManifest::new("generate", args, Some(cfg.config_hash()))?.write_beside(&args.out)?;
    if !output.failures.is_empty() {
        return Err(GenerationFailures {
            count: output.failures.len(),
            path: failures_path,
        }
        .into());
    }
    Ok(())
}

pub fn validate(args: &ValidateArgs) -> Result<()> {
    guard_output(&args.out, &[&args.records])?;
    let cfg = tagger(&args.tagger)?;
    let records: Vec<ParaphraseRecord> = read_jsonl(&args.records)?;
    let mismatches = recompute_distances(&records, &cfg)?;
    if let Some(first) = mismatches.first() {
        bail!(distpara::Error::Data(format!(
            "{} record(s) disagree with recomputed distances; first at record {} (stored {}, recomputed {})",
            mismatches.len(),
            first.position + 1,
            first.stored,
            first.recomputed
        )));
    }
    let (accepted, rejected) = validate_records(&records, args.tolerance)?;
    write_jsonl(&args.out, &accepted)?;
    write_jsonl(&sidecar(&args.out, "rejected.jsonl"), &rejected)?;
    info!("{} accepted, {} rejected", accepted.len(), rejected.len());
    RunManifest::new("validate", args, Some(cfg.config_hash()))?.write_beside(&args.out)?;
    Ok(())
}

pub fn stats(args: &StatsArgs) -> Result<()> {
    let inputs: Vec<&Path> = args.records.iter().map(PathBuf::as_path).collect();
    guard_output(&args.out, &inputs)?;
    let mut records: Vec<ParaphraseRecord> = Vec::new();
    for path in &args.records {
        records.extend(read_jsonl::<ParaphraseRecord>(path)?);
    }
    let mut hashes: Vec<&str> = records.iter().map(|r| r.config_hash.as_str()).collect();
    hashes.sort_unstable();
    hashes.dedup();
    if hashes.len() > 1 {
        warn!("records come from {} different tagger configs", hashes.len());
    }
    let stats = summarize(&records);
    write_json(&args.out, &stats)?;
    info!("{} record(s) in {} group(s)", records.len(), stats.len());
    let hash = (hashes.len() == 1).then(|| hashes[0].to_string());
    RunManifest::new("stats", args, hash)?.write_beside(&args.out)?;
    Ok(())
}

pub fn simulate(args: &SimulateArgs) -> Result<()> {
    let cfg = ContrastiveConfig {
        temperature: args.temperature,
        batch_size: args.batch_size.unwrap_or(usize::MAX),
        learning_rate: args.lr,
        epochs: args.epochs,
        seed: args.seeds.first().copied().unwrap_or(0),
        variant: if args.include_positive_in_denominator {
            LossVariant::IncludePositive
        } else {
            LossVariant::ExcludePositive
        },
    };
    let report = run_simulation(&args.seeds, args.items, args.dim, &cfg)?;
    write_json(&args.out, &report)?;
    info!(
        "mean R@1 text->audio: many-to-one {:.3}, unique {:.3}; unique wins on {} of {} seeds",
        report.mean_many_to_one.t2a_r1,
        report.mean_unique.t2a_r1,
        report.unique_wins,
        report.per_seed.len()
    );
    RunManifest::new("simulate", args, None)?.write_beside(&args.out)?;
    Ok(())
}
