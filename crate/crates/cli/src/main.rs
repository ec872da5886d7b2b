//! `storyline`: synthesise, embed, train, cluster, evaluate and inspect.

mod manifest;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use storyline_core::corpus::synth::{synth_corpus, LangRegime, SynthConfig};
use storyline_core::corpus::{embed, load_corpus, EmbedOptions, EmbeddingCache, EmbeddingService, HttpEmbeddingService};
use storyline_core::engine::{write_assignments, DEFAULT_MERGE_TOP_M};
use storyline_core::eval::{read_connections, read_gold_labels};
use storyline_core::pool::read_pool_export;
use storyline_core::trainer::{load_model_dir, save_model_dir, DEFAULT_K_NEG};
use storyline_core::{
    evaluate, resolve_assignments, train_all, AssignmentRecord, ClusterRecord, DocRepr, Engine, EngineConfig,
    FeatureConfig, FeatureSet, GoldStandard, PoolConfig, SizeLimits, StoryRelation, TemporalParams, TrainConfig,
    TrainerConfig,
};

use manifest::Manifest;

#[derive(Debug, Parser)]
#[command(name = "storyline", version, about = "Online clustering of news streams into stories")]
struct Cli {
    /// Print reports as JSON instead of text.
    #[arg(long, global = true)]
    json: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate train and test corpora with known stories and cached embeddings.
    Synth(SynthArgs),
    /// Fill an embedding cache for a corpus.
    Embed(EmbedArgs),
    /// Train the rank, accept and merge models.
    Train(TrainArgs),
    /// Cluster a corpus with trained models.
    Cluster(ClusterArgs),
    /// Score assignments against gold labels.
    Evaluate(EvaluateArgs),
    /// Summarise clusters from a pool export.
    Inspect(InspectArgs),
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 20)]
    stories: usize,
    #[arg(long, default_value_t = 30)]
    docs_per_story: usize,
    #[arg(long, default_value_t = 64)]
    dim: usize,
    /// Margin between a unit's similarity to its own story and to any other.
    #[arg(long, default_value_t = 0.5)]
    sep: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Seed of the test corpus [default: seed + 1].
    #[arg(long)]
    test_seed: Option<u64>,
    /// Output directory; receives train.* and test.* files.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 60)]
    time_spread_days: i64,
    #[arg(long, default_value_t = 7)]
    story_days: i64,
    /// Languages as name[:shift[:noise]], comma separated.
    #[arg(long, default_value = "en")]
    languages: String,
    /// Languages of the test corpus [default: same as --languages].
    #[arg(long)]
    test_languages: Option<String>,
    /// Test stories reuse the training story centers.
    #[arg(long)]
    shared_stories: bool,
    /// Label per story and language, joined by positive connections.
    #[arg(long)]
    crosslingual: bool,
    #[arg(long, default_value_t = 1.0)]
    connection_rate: f64,
    /// Stories whose documents arrive in two bursts.
    #[arg(long, default_value_t = 0)]
    split_stories: usize,
    #[arg(long, default_value_t = 20)]
    split_gap_days: i64,
}

#[derive(Debug, Args)]
struct EmbedArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    cache: PathBuf,
    /// Base URL of the embedding service; without it the cache must be complete.
    #[arg(long)]
    service: Option<String>,
    #[arg(long, default_value_t = 32)]
    batch_size: usize,
    #[arg(long, default_value_t = 4)]
    max_in_flight: usize,
    /// Initial retry delay in milliseconds, doubled per attempt.
    #[arg(long, default_value_t = 500)]
    backoff_ms: u64,
}

#[derive(Debug, Args)]
struct FeatureArgs {
    /// Offset of the temporal kernel, in days.
    #[arg(long, default_value_t = TemporalParams::DEFAULT_MU)]
    mu: f64,
    /// Width of the temporal kernel, in days.
    #[arg(long, default_value_t = TemporalParams::DEFAULT_SIGMA)]
    sigma: f64,
    #[arg(long, default_value = "1,2,3,5,10,20,50")]
    size_limits: SizeLimits,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    cache: PathBuf,
    /// Model directory.
    #[arg(long)]
    out: PathBuf,
    /// Positive label connections, one tab-separated pair per line.
    #[arg(long)]
    connections: Option<PathBuf>,
    #[command(flatten)]
    features: FeatureArgs,
    /// Rank/accept feature count: 8, or 4 for cos(d1, c1) plus the temporal features.
    #[arg(long = "features", default_value_t = 8)]
    feature_count: usize,
    #[arg(long, default_value_t = 20)]
    epochs: usize,
    #[arg(long, default_value_t = 0.01)]
    learning_rate: f64,
    #[arg(long, default_value_t = 1e-4)]
    lambda: f64,
    /// Decay the learning rate as lr / (1 + lambda * t).
    #[arg(long)]
    decay: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Negative clusters paired with each gold cluster.
    #[arg(long, default_value_t = DEFAULT_K_NEG)]
    k_neg: usize,
    #[arg(long, default_value_t = DEFAULT_MERGE_TOP_M)]
    merge_top_m: usize,
    #[arg(long)]
    merge_eval_all: bool,
    /// Mine rank negatives again with the first rank model and retrain.
    #[arg(long)]
    rerank_pass: bool,
    #[arg(long)]
    archive_days: Option<i64>,
    /// Also write the generated example sets as JSON lines.
    #[arg(long)]
    dump_examples: bool,
}

#[derive(Debug, Args)]
struct ClusterArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    cache: PathBuf,
    /// Model directory written by `train`.
    #[arg(long)]
    models: PathBuf,
    /// Assignment records; the pool export goes to <stem>.pool.jsonl.
    #[arg(long)]
    out: PathBuf,
    /// Must match the feature count the models were trained with [default: from the model directory].
    #[arg(long)]
    features: Option<usize>,
    #[arg(long)]
    no_merge: bool,
    #[arg(long)]
    merge_eval_all: bool,
    #[arg(long, default_value_t = DEFAULT_MERGE_TOP_M)]
    merge_top_m: usize,
    /// Archive clusters idle for more than this many days.
    #[arg(long)]
    archive_days: Option<i64>,
    /// Include centroids in the pool export.
    #[arg(long)]
    with_centroids: bool,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    /// Assignment records, a pool export, or a labelled corpus.
    #[arg(long)]
    assignments: PathBuf,
    /// JSON lines with id, cluster and optional lang; a corpus file works.
    #[arg(long)]
    gold: PathBuf,
    #[arg(long)]
    connections: Option<PathBuf>,
    /// Treat connections transitively in standard F1.
    #[arg(long)]
    closure: bool,
    /// Only score documents in these languages.
    #[arg(long, value_delimiter = ',')]
    lang: Vec<String>,
}

#[derive(Debug, Args)]
struct InspectArgs {
    #[arg(long)]
    pool: PathBuf,
    /// Cluster id; all clusters are listed without it.
    #[arg(long)]
    cluster: Option<u64>,
}

/// A bad flag or input, reported with exit code 2.
#[derive(Debug)]
struct Invalid(String);

impl fmt::Display for Invalid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Invalid {}

fn invalid(msg: impl Into<String>) -> anyhow::Error {
    Invalid(msg.into()).into()
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<Invalid>() {
            return 2;
        }
        if let Some(e) = cause.downcast_ref::<storyline_core::Error>() {
            return if e.is_validation() { 2 } else { 3 };
        }
    }
    3
}

fn require_file(path: &Path) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(invalid(format!("input file not found: {}", path.display())))
    }
}

fn print_report<T: Serialize>(as_json: bool, value: &T, text: impl FnOnce() -> String) -> Result<()> {
    let body = if as_json { serde_json::to_string(value)? } else { text() };
    match writeln!(std::io::stdout().lock(), "{body}") {
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
        other => Ok(other?),
    }
}

fn create_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => {
            std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
        }
        _ => Ok(()),
    }
}

fn parse_languages(spec: &str) -> Result<Vec<LangRegime>> {
    spec.split(',')
        .map(|item| {
            let mut parts = item.split(':');
            let name = parts.next().filter(|n| !n.is_empty());
            let name = name.ok_or_else(|| invalid(format!("empty language in {spec:?}")))?;
            let mut num = |default: f64| -> Result<f64> {
                parts.next().map_or(Ok(default), |s| {
                    s.parse()
                        .map_err(|_| invalid(format!("bad number {s:?} in language {item:?}")))
                })
            };
            let shift = num(0.0)?;
            let noise = num(1.0)?;
            if parts.next().is_some() || shift < 0.0 || noise <= 0.0 {
                return Err(invalid(format!("bad language {item:?}; expected name[:shift[:noise]]")));
            }
            Ok(LangRegime {
                name: name.to_owned(),
                shift,
                noise,
            })
        })
        .collect()
}

fn synth(args: SynthArgs, as_json: bool) -> Result<()> {
    let base = SynthConfig {
        n_stories: args.stories,
        docs_per_story: args.docs_per_story,
        dim: args.dim,
        sep: args.sep,
        time_spread_days: args.time_spread_days,
        story_duration_days: args.story_days,
        seed: args.seed,
        center_seed: None,
        languages: parse_languages(&args.languages)?,
        crosslingual_labels: args.crosslingual,
        connection_rate: args.connection_rate,
        split_stories: args.split_stories,
        split_gap_days: args.split_gap_days,
        id_prefix: "train".into(),
        ..SynthConfig::default()
    };
    base.validate()?;
    let test_seed = args.test_seed.unwrap_or(args.seed.wrapping_add(1));
    let test_cfg = SynthConfig {
        seed: test_seed,
        center_seed: args.shared_stories.then_some(args.seed),
        languages: match &args.test_languages {
            Some(spec) => parse_languages(spec)?,
            None => base.languages.clone(),
        },
        id_prefix: "test".into(),
        ..base.clone()
    };
    let train_cfg = SynthConfig {
        center_seed: args.shared_stories.then_some(args.seed),
        ..base
    };

    let mut outputs = Vec::new();
    let mut summary = BTreeMap::new();
    for (name, cfg) in [("train", &train_cfg), ("test", &test_cfg)] {
        let corpus = synth_corpus(cfg)?;
        corpus.write(&args.out, name)?;
        for ext in ["jsonl", "emb", "connections.tsv"] {
            outputs.push(args.out.join(format!("{name}.{ext}")));
        }
        summary.insert(
            name,
            json!({"documents": corpus.docs.len(), "connections": corpus.connections.len()}),
        );
    }
    Manifest::new("synth")
        .seed("train", args.seed)
        .seed("test", test_seed)
        .outputs(&outputs)?
        .write(&args.out.join("synth.manifest.json"))?;
    print_report(as_json, &summary, || {
        format!(
            "wrote {} train and {} test documents to {}",
            summary["train"]["documents"],
            summary["test"]["documents"],
            args.out.display()
        )
    })
}

fn embed_cmd(args: EmbedArgs, as_json: bool) -> Result<()> {
    require_file(&args.corpus)?;
    let docs = load_corpus(&args.corpus)?;
    let mut cache = EmbeddingCache::open_or_create(&args.cache)?;
    let before = cache.len();
    let service = args
        .service
        .as_deref()
        .map(|url| HttpEmbeddingService::new(url).with_backoff(Duration::from_millis(args.backoff_ms)));
    let opts = EmbedOptions {
        batch_size: args.batch_size,
        max_in_flight: args.max_in_flight,
    };
    let reprs = embed(
        &docs,
        &mut cache,
        service.as_ref().map(|s| s as &dyn EmbeddingService),
        opts,
    )?;
    let summary = json!({
        "documents": reprs.len(),
        "units_cached": cache.len(),
        "units_added": cache.len() - before,
        "dim": cache.header().map(|h| h.dim),
        "model": cache.header().map(|h| h.model.clone()),
    });
    if args.cache.exists() {
        Manifest::new("embed")
            .inputs(std::slice::from_ref(&args.corpus))?
            .outputs(std::slice::from_ref(&args.cache))?
            .write(&sidecar(&args.cache, "manifest.json"))?;
    }
    print_report(as_json, &summary, || {
        format!(
            "{} documents embedded; cache holds {} units ({} new)",
            reprs.len(),
            cache.len(),
            cache.len() - before
        )
    })
}

/// `dir/stem.suffix` for an output file `dir/stem.ext`.
fn sidecar(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}.{suffix}"))
}

/// Corpus documents joined with cached vectors; misses are an error.
fn load_reprs(corpus: &Path, cache: &Path) -> Result<Vec<DocRepr>> {
    require_file(corpus)?;
    require_file(cache)?;
    let docs = load_corpus(corpus)?;
    let mut cache = EmbeddingCache::open(cache)?;
    Ok(embed(&docs, &mut cache, None, EmbedOptions::default())?)
}

fn temporal(args: &FeatureArgs) -> Result<TemporalParams> {
    Ok(TemporalParams::new(args.mu, args.sigma)?)
}

fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let mut out = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    for item in items {
        serde_json::to_writer(&mut out, item)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

fn train(args: TrainArgs, as_json: bool) -> Result<()> {
    let engine = EngineConfig {
        temporal: temporal(&args.features)?,
        size_limits: args.features.size_limits.clone(),
        features: FeatureSet::from_count(args.feature_count)?,
        merge_top_m: args.merge_top_m,
        merge_eval_all: args.merge_eval_all,
        pool: PoolConfig {
            archive_horizon_days: args.archive_days,
            lean: false,
        },
    };
    let cfg = TrainerConfig {
        engine,
        k_neg: args.k_neg,
        rerank_pass: args.rerank_pass,
        train: TrainConfig {
            epochs: args.epochs,
            learning_rate: args.learning_rate,
            l2_lambda: args.lambda,
            seed: args.seed,
            shuffle: true,
            decay: args.decay,
        },
    };
    cfg.train.validate()?;
    cfg.engine.pool.validate()?;
    if let Some(c) = &args.connections {
        require_file(c)?;
    }
    let reprs = load_reprs(&args.corpus, &args.cache)?;
    let connections = match &args.connections {
        Some(c) => read_connections(c)?,
        None => Vec::new(),
    };

    let trained = train_all(&reprs, &connections, &cfg)?;
    save_model_dir(&args.out, &trained.models, &FeatureConfig::of(&cfg.engine), &trained.report)?;
    let mut outputs: Vec<PathBuf> = ["rank.model", "accept.model", "merge.model", "config.json", "report.json"]
        .iter()
        .map(|f| args.out.join(f))
        .collect();
    if args.dump_examples {
        let sets = &trained.sets;
        let files = [
            ("examples.rank.jsonl", write_jsonl(&args.out.join("examples.rank.jsonl"), &sets.rank)),
            ("examples.accept.jsonl", write_jsonl(&args.out.join("examples.accept.jsonl"), &sets.accept)),
            ("examples.merge.jsonl", write_jsonl(&args.out.join("examples.merge.jsonl"), &sets.merge)),
        ];
        for (name, written) in files {
            written?;
            outputs.push(args.out.join(name));
        }
    }
    let mut inputs = vec![args.corpus.clone(), args.cache.clone()];
    inputs.extend(args.connections.clone());
    Manifest::new("train")
        .seed("train", args.seed)
        .inputs(&inputs)?
        .outputs(&outputs)?
        .write(&args.out.join("manifest.json"))?;

    let r = &trained.report;
    print_report(as_json, r, || {
        let mut s = format!(
            "rank:   {} pairs, loss {:.6}\naccept: {} positive / {} negative, loss {:.6}\nmerge:  {} positive / {} negative, loss {:.6}",
            r.rank_pairs, r.rank_loss, r.accept_positive, r.accept_negative, r.accept_loss,
            r.merge_positive, r.merge_negative, r.merge_loss
        );
        if r.merge_fallback {
            s.push_str(" (single-class merge set; never-merge model written)");
        }
        s
    })
}

#[derive(Debug, Serialize)]
struct ClusterSummary {
    documents: usize,
    clusters: usize,
    live: usize,
    merges: usize,
    created: usize,
}

fn cluster(args: ClusterArgs, as_json: bool) -> Result<()> {
    if !args.models.is_dir() {
        return Err(invalid(format!("model directory not found: {}", args.models.display())));
    }
    let (mut models, fc) = load_model_dir(&args.models)?;
    if let Some(n) = args.features {
        let requested = FeatureSet::from_count(n)?;
        if requested != fc.features {
            return Err(invalid(format!(
                "models in {} use {} features, not {n}; retrain with --features {n}",
                args.models.display(),
                fc.features.arity()
            )));
        }
    }
    if args.no_merge {
        models.merge = None;
    }
    let cfg = EngineConfig {
        temporal: fc.temporal,
        size_limits: fc.size_limits,
        features: fc.features,
        merge_top_m: args.merge_top_m,
        merge_eval_all: args.merge_eval_all,
        pool: PoolConfig {
            archive_horizon_days: args.archive_days,
            lean: true,
        },
    };
    let mut engine = Engine::new(cfg, models)?;
    let reprs = load_reprs(&args.corpus, &args.cache)?;

    let records = engine.run_stream(&reprs)?;
    create_parent(&args.out)?;
    let out = File::create(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    write_assignments(BufWriter::new(out), &records)?;
    let pool_path = sidecar(&args.out, "pool.jsonl");
    let pool_file = File::create(&pool_path).with_context(|| format!("creating {}", pool_path.display()))?;
    let mut pool_out = BufWriter::new(pool_file);
    engine.pool().export_jsonl(&mut pool_out, args.with_centroids)?;
    pool_out.flush()?;

    let model_files: Vec<PathBuf> = ["rank.model", "accept.model", "merge.model", "config.json"]
        .iter()
        .map(|f| args.models.join(f))
        .collect();
    let mut inputs = vec![args.corpus.clone(), args.cache.clone()];
    inputs.extend(model_files);
    Manifest::new("cluster")
        .inputs(&inputs)?
        .outputs(&[args.out.clone(), pool_path])?
        .write(&sidecar(&args.out, "manifest.json"))?;

    let pool = engine.pool();
    let summary = ClusterSummary {
        documents: records.len(),
        clusters: pool.live_count() + pool.archived_clusters().len(),
        live: pool.live_count(),
        merges: pool.merge_log().len(),
        created: records.iter().filter(|r| r.created).count(),
    };
    print_report(as_json, &summary, || {
        format!(
            "{} documents -> {} clusters ({} live), {} merges",
            summary.documents, summary.clusters, summary.live, summary.merges
        )
    })
}

/// Predicted cluster per document from assignment records, a pool export,
/// or a labelled corpus.
fn read_predictions(path: &Path) -> Result<BTreeMap<String, String>> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut records: Vec<AssignmentRecord> = Vec::new();
    let mut direct: BTreeMap<String, String> = BTreeMap::new();
    let mut formats = BTreeSet::new();
    let bad = |line: usize, msg: String| invalid(format!("{}:{line}: {msg}", path.display()));
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value = serde_json::from_str(&line).map_err(|e| bad(i + 1, e.to_string()))?;
        if value.get("doc_id").is_some() {
            formats.insert("assignments");
            records.push(serde_json::from_value(value).map_err(|e| bad(i + 1, e.to_string()))?);
        } else if value.get("members").is_some() {
            formats.insert("pool");
            let c: ClusterRecord = serde_json::from_value(value).map_err(|e| bad(i + 1, e.to_string()))?;
            for m in c.members {
                direct.insert(m, c.id.to_string());
            }
        } else if let (Some(id), Some(label)) = (value.get("id"), value.get("cluster")) {
            formats.insert("labels");
            let (Some(id), Some(label)) = (id.as_str(), label.as_str()) else {
                return Err(bad(i + 1, "id and cluster must be strings".into()));
            };
            direct.insert(id.to_owned(), label.to_owned());
        } else {
            return Err(bad(i + 1, "not an assignment, cluster or label record".into()));
        }
    }
    if formats.len() > 1 {
        return Err(invalid(format!("{} mixes record formats: {formats:?}", path.display())));
    }
    if !records.is_empty() {
        direct = resolve_assignments(&records)
            .into_iter()
            .map(|(d, c)| (d, c.to_string()))
            .collect();
    }
    Ok(direct)
}

fn evaluate_cmd(args: EvaluateArgs, as_json: bool) -> Result<()> {
    require_file(&args.assignments)?;
    require_file(&args.gold)?;
    if let Some(c) = &args.connections {
        require_file(c)?;
    }
    let pred = read_predictions(&args.assignments)?;
    let gold_file = read_gold_labels(&args.gold)?;
    let connections = match &args.connections {
        Some(c) => read_connections(c)?,
        None => Vec::new(),
    };
    let mut gold = GoldStandard::new(gold_file.labels, connections)?;
    let mut pred = pred;
    if !args.lang.is_empty() {
        let keep: BTreeSet<&str> = args.lang.iter().map(String::as_str).collect();
        let in_lang = |d: &str| {
            gold_file
                .languages
                .get(d)
                .is_some_and(|l| keep.contains(l.as_str()))
        };
        gold = gold.restrict(in_lang);
        pred.retain(|d, _| in_lang(d));
        if gold.labels().is_empty() {
            return Err(invalid(format!("no gold documents in languages {:?}", args.lang)));
        }
    }
    let relation = if args.closure {
        StoryRelation::Closure
    } else {
        StoryRelation::Direct
    };
    let report = evaluate(&pred, &gold, relation)?;
    print_report(as_json, &report, || report.to_string())
}

fn inspect(args: InspectArgs, as_json: bool) -> Result<()> {
    require_file(&args.pool)?;
    let records = read_pool_export(&args.pool)?;
    let selected: Vec<&ClusterRecord> = match args.cluster {
        Some(id) => {
            let r = records
                .iter()
                .find(|r| r.id.0 == id)
                .ok_or_else(|| invalid(format!("cluster {id} not in {}", args.pool.display())))?;
            vec![r]
        }
        None => records.iter().collect(),
    };
    print_report(as_json, &selected, || {
        let mut s = String::new();
        if args.cluster.is_some() {
            let r = selected[0];
            s.push_str(&format!(
                "cluster {}{}\nsize     {}\nnewest   day {}\noldest   day {}\nmean     day {:.2}\nmembers  {}",
                r.id,
                if r.archived { " (archived)" } else { "" },
                r.size,
                r.ts_newest,
                r.ts_oldest,
                r.ts_mean,
                r.members.join(" ")
            ));
        } else {
            s.push_str(&format!("{:>8} {:>6} {:>8} {:>8} {:>9}", "cluster", "size", "oldest", "newest", "archived"));
            for r in &selected {
                s.push_str(&format!(
                    "\n{:>8} {:>6} {:>8} {:>8} {:>9}",
                    r.id, r.size, r.ts_oldest, r.ts_newest, r.archived
                ));
            }
        }
        s
    })
}

fn run(cli: Cli) -> Result<()> {
    let json = cli.json;
    match cli.command {
        Command::Synth(a) => synth(a, json),
        Command::Embed(a) => embed_cmd(a, json),
        Command::Train(a) => train(a, json),
        Command::Cluster(a) => cluster(a, json),
        Command::Evaluate(a) => evaluate_cmd(a, json),
        Command::Inspect(a) => inspect(a, json),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let code = exit_code(&err);
            let kind = if code == 2 { "validation" } else { "runtime" };
            let message = format!("{err:#}");
            eprintln!("{}", json!({"error": message, "kind": kind, "code": code}));
            ExitCode::from(code)
        }
    }
}
