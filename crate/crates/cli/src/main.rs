//! `transcompat` command-line front end.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage or validation error.

mod manifest;

use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::Serialize;

use transcompat::corpus::{generate_synthetic, SynthConfig};
use transcompat::evaluator::{build_candidates, evaluate_plan, CandidatePlan};
use transcompat::sampling::{read_candidates, write_candidates};
use transcompat::trainer::{encode_checkpoint, write_training_log, Trainer};
use transcompat::{
    load_checkpoint, load_corpus, EvalConfig, EvalMode, ModelKind, ScorePart, Split, TrainConfig,
};

use manifest::{digests, files_in, write_atomic, write_manifest, Artifact, RunManifest};

const SYNTH_MANIFEST: &str = "manifest.json";

#[derive(Debug, Parser)]
#[command(name = "transcompat", version, about = "Translation-based compatibility modeling")]
struct Cli {
    /// Cap on worker threads (default: one per core).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic corpus with planted category translations.
    Synth(SynthArgs),
    /// Train a model and write its checkpoint.
    Train(TrainArgs),
    /// Evaluate a checkpoint with the ranking protocol.
    Eval(EvalArgs),
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// JSON file with generator settings; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Number of categories [default: 4]
    #[arg(long)]
    categories: Option<usize>,
    /// Items per category [default: 200]
    #[arg(long)]
    items_per_cat: Option<usize>,
    /// Latent dimension [default: 8]
    #[arg(long)]
    latent_dim: Option<usize>,
    /// Feature dimension per modality [default: 32]
    #[arg(long)]
    feature_dim: Option<usize>,
    /// Standard deviation of latent noise [default: 0.05]
    #[arg(long)]
    noise: Option<f64>,
    /// Positive pairs per relation [default: 400]
    #[arg(long)]
    pairs_per_relation: Option<usize>,
    /// [default: 1]
    #[arg(long)]
    seed: Option<u64>,
    /// Output corpus directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// JSON file with training settings; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Corpus directory.
    #[arg(long)]
    data: PathBuf,
    /// transnfcm, trinet, sianet, bpr or csn [default: transnfcm]
    #[arg(long)]
    model: Option<ModelKind>,
    /// Comma-separated modalities; `v` and `t` abbreviate visual and textual
    /// [default: all in the corpus]
    #[arg(long, value_delimiter = ',')]
    modalities: Option<Vec<String>>,
    /// Embedding dimension per modality [default: 128]
    #[arg(long)]
    dim: Option<usize>,
    /// [default: 30]
    #[arg(long)]
    epochs: Option<usize>,
    /// Tuples per minibatch [default: 128]
    #[arg(long)]
    batch: Option<usize>,
    /// Base learning rate [default: 0.001]
    #[arg(long)]
    lr: Option<f64>,
    /// [default: 0.9]
    #[arg(long)]
    momentum: Option<f64>,
    /// Ranking margin [default: 1.0]
    #[arg(long)]
    margin: Option<f64>,
    /// Input dropout rate [default: 0.5]
    #[arg(long)]
    dropout: Option<f64>,
    /// Width of an optional rectified hidden layer per encoder.
    #[arg(long)]
    hidden_dim: Option<usize>,
    /// Separate relation vectors for each direction of a category pair.
    #[arg(long)]
    untied: bool,
    /// [default: 0]
    #[arg(long)]
    seed: Option<u64>,
    /// Checkpoint path. The best-validation model, training log and manifest
    /// are written next to it.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// JSON file with evaluation settings; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Corpus directory.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    checkpoint: PathBuf,
    /// Negatives per query [default: 100]
    #[arg(long)]
    negatives: Option<usize>,
    /// Comma-separated Hit@K cutoffs [default: 5,10,20,40]
    #[arg(long, value_delimiter = ',')]
    k: Option<Vec<usize>>,
    /// train, val or test [default: test]
    #[arg(long)]
    split: Option<Split>,
    /// open or known-target [default: open]
    #[arg(long)]
    mode: Option<EvalMode>,
    /// all, global or category [default: all]
    #[arg(long)]
    part: Option<ScorePart>,
    /// Only queries whose head item is in this category.
    #[arg(long)]
    head_category: Option<String>,
    /// [default: 0]
    #[arg(long)]
    seed: Option<u64>,
    /// Score frozen candidates from this JSON-lines file instead of sampling.
    #[arg(long, conflicts_with = "export_candidates")]
    candidates: Option<PathBuf>,
    /// Also write the sampled candidates as JSON lines.
    #[arg(long)]
    export_candidates: Option<PathBuf>,
    /// Report path; its manifest is written next to it.
    #[arg(long)]
    report: PathBuf,
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Runtime(String),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Runtime(m) => f.write_str(m),
        }
    }
}

impl From<transcompat::Error> for CliError {
    fn from(e: transcompat::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

type CliResult<T> = Result<T, CliError>;

fn usage(e: impl fmt::Display) -> CliError {
    CliError::Usage(e.to_string())
}

fn io_at(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |e| CliError::Runtime(format!("{}: {e}", path.display()))
}

/// Defaults overlaid with the keys of an optional JSON object file.
fn load_config<T: Default + Serialize + DeserializeOwned>(path: Option<&Path>) -> CliResult<T> {
    let Some(path) = path else {
        return Ok(T::default());
    };
    let text = std::fs::read_to_string(path).map_err(io_at(path))?;
    let file: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    let serde_json::Value::Object(overrides) = file else {
        return Err(usage(format!("{}: expected a JSON object", path.display())));
    };
    let mut merged = serde_json::to_value(T::default()).expect("config serializes");
    let obj = merged.as_object_mut().expect("config is an object");
    obj.extend(overrides);
    serde_json::from_value(merged).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn expand_modality(m: &str) -> String {
    match m.trim() {
        "v" => "visual".into(),
        "t" => "textual".into(),
        other => other.into(),
    }
}

/// `model.ckpt` → `model.<suffix>`
fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}.{suffix}"))
}

fn corpus_files(dir: &Path) -> CliResult<Vec<PathBuf>> {
    files_in(dir, SYNTH_MANIFEST).map_err(io_at(dir))
}

fn to_json<T: Serialize>(v: &T) -> serde_json::Value {
    serde_json::to_value(v).expect("settings serialize")
}

fn cmd_synth(args: &SynthArgs, argv: &[String]) -> CliResult<()> {
    let t0 = Instant::now();
    let mut cfg: SynthConfig = load_config(args.config.as_deref())?;
    if let Some(v) = args.categories {
        cfg.num_categories = v;
    }
    if let Some(v) = args.items_per_cat {
        cfg.items_per_category = v;
    }
    if let Some(v) = args.latent_dim {
        cfg.latent_dim = v;
    }
    if let Some(v) = args.feature_dim {
        cfg.feature_dim = v;
    }
    if let Some(v) = args.noise {
        cfg.noise_sigma = v;
    }
    if let Some(v) = args.pairs_per_relation {
        cfg.pairs_per_relation = v;
    }
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    cfg.validate().map_err(usage)?;

    std::fs::create_dir_all(&args.out).map_err(io_at(&args.out))?;
    let summary = generate_synthetic(&cfg, &args.out)?;
    log::info!(
        "wrote {} items, splits {:?}, {} relations to {}",
        summary.num_items,
        summary.split_sizes,
        summary.relations.len(),
        args.out.display()
    );
    let outputs = digests(&corpus_files(&args.out)?)?;
    let manifest = RunManifest {
        tool: "transcompat",
        version: env!("CARGO_PKG_VERSION"),
        command: "synth".into(),
        argv: argv.to_vec(),
        flags: serde_json::json!({ "out": args.out, "config": to_json(&cfg) }),
        seed: cfg.seed,
        inputs: Vec::new(),
        outputs,
        duration_secs: t0.elapsed().as_secs_f64(),
    };
    let path = args.out.join(SYNTH_MANIFEST);
    write_manifest(&path, &manifest).map_err(io_at(&path))
}

fn cmd_train(args: &TrainArgs, argv: &[String]) -> CliResult<()> {
    let t0 = Instant::now();
    let mut cfg: TrainConfig = load_config(args.config.as_deref())?;
    if let Some(v) = args.model {
        cfg.model = v;
    }
    if let Some(v) = &args.modalities {
        cfg.modalities = v.iter().map(|m| expand_modality(m)).collect();
    }
    if let Some(v) = args.dim {
        cfg.embed_dim = v;
    }
    if let Some(v) = args.epochs {
        cfg.epochs = v;
    }
    if let Some(v) = args.batch {
        cfg.batch_size = v;
    }
    if let Some(v) = args.lr {
        cfg.base_lr = v;
    }
    if let Some(v) = args.momentum {
        cfg.momentum = v;
    }
    if let Some(v) = args.margin {
        cfg.margin = v;
    }
    if let Some(v) = args.dropout {
        cfg.dropout_rate = v;
    }
    if args.hidden_dim.is_some() {
        cfg.hidden_dim = args.hidden_dim;
    }
    if args.untied {
        cfg.untied_directions = true;
    }
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    cfg.validate().map_err(usage)?;

    let corpus = load_corpus(&args.data)?;
    for w in corpus.warnings() {
        log::warn!("{w}");
    }
    let trainer = Trainer::new(&corpus, &cfg).map_err(|e| match e {
        transcompat::Error::Invalid(m) => CliError::Usage(m),
        other => other.into(),
    })?;
    log::info!(
        "training {} on {} items, {} training pairs, {} relations",
        cfg.model,
        corpus.num_items(),
        corpus.pairs(Split::Train).pairs.len(),
        corpus.graph().num_relations()
    );
    let outcome = trainer.run(|_| {})?;

    let best_path = sibling(&args.out, "best.ckpt");
    let log_path = sibling(&args.out, "log.jsonl");
    write_atomic(&args.out, &encode_checkpoint(&outcome.model)?).map_err(io_at(&args.out))?;
    let mut written = vec![args.out.clone()];
    if let Some(best) = &outcome.best {
        write_atomic(&best_path, &encode_checkpoint(best)?).map_err(io_at(&best_path))?;
        written.push(best_path);
    }
    write_training_log(&log_path, &outcome.model.history)?;
    written.push(log_path);

    let manifest = RunManifest {
        tool: "transcompat",
        version: env!("CARGO_PKG_VERSION"),
        command: "train".into(),
        argv: argv.to_vec(),
        flags: serde_json::json!({
            "data": args.data,
            "out": args.out,
            "config": to_json(&outcome.model.config),
        }),
        seed: cfg.seed,
        inputs: digests(&corpus_files(&args.data)?)?,
        outputs: digests(&written)?,
        duration_secs: t0.elapsed().as_secs_f64(),
    };
    let path = sibling(&args.out, "manifest.json");
    write_manifest(&path, &manifest).map_err(io_at(&path))
}

fn cmd_eval(args: &EvalArgs, argv: &[String]) -> CliResult<()> {
    let t0 = Instant::now();
    let mut cfg: EvalConfig = load_config(args.config.as_deref())?;
    if let Some(v) = args.negatives {
        cfg.negatives = v;
    }
    if let Some(v) = &args.k {
        cfg.ks = v.clone();
    }
    if let Some(v) = args.split {
        cfg.split = v;
    }
    if let Some(v) = args.mode {
        cfg.mode = v;
    }
    if let Some(v) = args.part {
        cfg.part = v;
    }
    if args.head_category.is_some() {
        cfg.head_category = args.head_category.clone();
    }
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    cfg.validate().map_err(usage)?;

    let model = load_checkpoint(&args.checkpoint)?;
    if cfg.part != ScorePart::All && model.kind() != ModelKind::TransNfcm {
        return Err(usage(format!(
            "--part {} only applies to transnfcm checkpoints, this one is {}",
            cfg.part.as_str(),
            model.kind()
        )));
    }
    let corpus = load_corpus(&args.data)?;
    model.check_corpus(&corpus)?;

    let mut inputs = corpus_files(&args.data)?;
    inputs.push(args.checkpoint.clone());
    let plan = match &args.candidates {
        Some(path) => {
            inputs.push(path.clone());
            CandidatePlan {
                sets: read_candidates(path, &corpus)?,
                skipped_unknown_relation: 0,
            }
        }
        None => build_candidates(&corpus, &cfg)?,
    };
    let report = evaluate_plan(&model, &corpus, &plan, &cfg)?;
    if report.shortfall_queries > 0 {
        log::warn!(
            "{} queries received fewer than {} negatives ({} missing in total)",
            report.shortfall_queries,
            cfg.negatives,
            report.shortfall_negatives
        );
    }
    log::info!("{} queries, {} skipped", report.n_queries, report.n_skipped);
    log::info!("{}", report.table.header());
    log::info!("{}", report.table.values());

    let mut json = serde_json::to_vec_pretty(&report).map_err(|e| CliError::Runtime(e.to_string()))?;
    json.push(b'\n');
    write_atomic(&args.report, &json).map_err(io_at(&args.report))?;
    let mut written = vec![args.report.clone()];
    if let Some(path) = &args.export_candidates {
        write_candidates(path, &corpus, &plan.sets)?;
        written.push(path.clone());
    }

    let manifest = RunManifest {
        tool: "transcompat",
        version: env!("CARGO_PKG_VERSION"),
        command: "eval".into(),
        argv: argv.to_vec(),
        flags: serde_json::json!({
            "data": args.data,
            "checkpoint": args.checkpoint,
            "candidates": args.candidates,
            "export_candidates": args.export_candidates,
            "report": args.report,
            "config": to_json(&cfg),
        }),
        seed: cfg.seed,
        inputs: digests(&inputs)?,
        outputs: written.iter().map(|p| Artifact::of(p)).collect::<Result<_, _>>()?,
        duration_secs: t0.elapsed().as_secs_f64(),
    };
    let path = sibling(&args.report, "manifest.json");
    write_manifest(&path, &manifest).map_err(io_at(&path))
}

fn run(cli: &Cli, argv: &[String]) -> CliResult<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(usage("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Runtime(e.to_string()))?;
    }
    match &cli.command {
        Command::Synth(a) => cmd_synth(a, argv),
        Command::Train(a) => cmd_train(a, argv),
        Command::Eval(a) => cmd_eval(a, argv),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let argv: Vec<String> = std::env::args().collect();
    let cli = Cli::parse();
    match run(&cli, &argv) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            match e {
                CliError::Usage(_) => ExitCode::from(2),
                CliError::Runtime(_) => ExitCode::from(1),
            }
        }
    }
}
