//! `lpf`: command-line entry point binding dataset generation, two-stage
//! training, inference, evaluation, ablations, ledger verification, and the
//! reference-scenario replay into reproducible workflows.

mod config;

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use config::RunConfig;
use lpf_core::checkpoint::ModelCheckpoint;
use lpf_core::evidence::{timeutil, EvidenceRecord, EvidenceStore};
use lpf_core::ledger::{self, Ledger, VerifyOutcome};
use lpf_core::nets::{seed_search, train_aggregator};
use lpf_core::numerics::RandomStream;
use lpf_core::pipeline::{
    ablation_table_text, dataset, entity_samples_from_records, evaluate_entities,
    evidence_samples_from_records, generate_compliance_dataset, replay_worked_example,
    run_ablation, AblationAxis, DatasetSplits, EvalMethod, Orchestrator, QueryOptions,
    SyntheticEntity,
};

#[derive(Parser)]
#[command(name = "lpf", version, about = "Latent posterior factors pipeline")]
struct Cli {
    /// Flat dotted-key configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Dataset directory (overrides paths.dataset_dir).
    #[arg(long, global = true)]
    dataset_dir: Option<PathBuf>,
    /// Model directory (overrides paths.model_dir).
    #[arg(long, global = true)]
    model_dir: Option<PathBuf>,
    /// Ledger file (overrides paths.ledger_file).
    #[arg(long, global = true)]
    ledger_file: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

/// Per-query knobs shared by infer/eval/ablate.
#[derive(Args, Clone)]
struct QueryFlags {
    /// Aggregation variant: spn or learned.
    #[arg(long)]
    variant: Option<String>,
    #[arg(long)]
    top_k: Option<usize>,
    #[arg(long)]
    n_samples: Option<usize>,
    #[arg(long)]
    temperature: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    /// Reference instant (ISO-8601) for canonical staleness; defaults to now.
    #[arg(long)]
    now: Option<String>,
    /// Base seed for the query random streams.
    #[arg(long, default_value_t = 7)]
    seed: u64,
}

impl QueryFlags {
    fn apply(&self, opts: &mut QueryOptions) -> Result<()> {
        if let Some(v) = &self.variant {
            opts.variant = v.parse()?;
        }
        if let Some(k) = self.top_k {
            opts.top_k = k;
        }
        if let Some(m) = self.n_samples {
            opts.n_samples = m;
        }
        if let Some(t) = self.temperature {
            opts.temperature = t;
        }
        if let Some(a) = self.alpha {
            opts.alpha = a;
        }
        Ok(())
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic compliance corpus.
    GenData {
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long)]
        n_entities: Option<usize>,
        #[arg(long)]
        noise: Option<f64>,
    },
    /// Seed-search encoder/decoder training, then aggregator training.
    Train {
        /// Comma-separated training seeds (overrides config `seeds`).
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
    },
    /// Answer one entity/predicate query and append a provenance record.
    Infer {
        #[arg(long)]
        entity: String,
        #[arg(long, default_value = "compliance_level")]
        predicate: String,
        #[command(flatten)]
        query: QueryFlags,
    },
    /// Evaluate a split and write a metrics report.
    Eval {
        #[arg(long, default_value = "test")]
        split: String,
        #[command(flatten)]
        query: QueryFlags,
    },
    /// Sweep one hyperparameter axis over the test split.
    Ablate {
        /// n-samples, temperature, alpha, or top-k.
        #[arg(long)]
        axis: String,
        /// Grid values; defaults to the published sweep for the axis.
        #[arg(long, value_delimiter = ',')]
        values: Option<Vec<f64>>,
        #[command(flatten)]
        query: QueryFlags,
    },
    /// Recompute every hash and chain link of a ledger file.
    VerifyLedger {
        /// Ledger path; defaults to paths.ledger_file.
        path: Option<PathBuf>,
    },
    /// Replay the built-in reference scenario and report pass/fail.
    ReplayWorkedExample,
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let mut config = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    config.apply_env()?;
    if let Some(dir) = &cli.dataset_dir {
        config.dataset_dir = dir.clone();
    }
    if let Some(dir) = &cli.model_dir {
        config.model_dir = dir.clone();
    }
    if let Some(file) = &cli.ledger_file {
        config.ledger_file = file.clone();
    }

    match cli.command {
        Command::GenData { seed, n_entities, noise } => {
            cmd_gen_data(&config, seed, n_entities, noise)
        }
        Command::Train { seeds } => cmd_train(&config, seeds),
        Command::Infer { entity, predicate, query } => {
            cmd_infer(&config, &entity, &predicate, &query)
        }
        Command::Eval { split, query } => cmd_eval(&config, &split, &query),
        Command::Ablate { axis, values, query } => cmd_ablate(&config, &axis, values, &query),
        Command::VerifyLedger { path } => cmd_verify_ledger(&config, path),
        Command::ReplayWorkedExample => cmd_replay_worked_example(),
    }
}

fn now_iso() -> String {
    let secs = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs() as i64)
        .unwrap_or(0);
    timeutil::format_iso8601(secs)
}

/// Wall-clock side notes stay out of the deterministic primary outputs.
fn append_run_log(dir: &Path, line: &str) -> Result<()> {
    let mut file = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(dir.join("run.log"))?;
    writeln!(file, "{} {line}", now_iso())?;
    Ok(())
}

fn cmd_gen_data(
    config: &RunConfig,
    seed: u64,
    n_entities: Option<usize>,
    noise: Option<f64>,
) -> Result<()> {
    let mut opts = config.data.clone();
    if let Some(n) = n_entities {
        opts.n_entities = n;
    }
    if let Some(f) = noise {
        opts.noise = f;
    }
    let out = &config.dataset_dir;
    std::fs::create_dir_all(out)
        .with_context(|| format!("creating dataset dir {}", out.display()))?;
    let ds = generate_compliance_dataset(seed, &opts)?;
    ds.save_entities_jsonl(&out.join("entities.jsonl"))?;
    ds.save_evidence_jsonl(&out.join("evidence.jsonl"))?;
    ds.save_splits_json(&out.join("splits.json"))?;
    append_run_log(out, &format!("gen-data seed={seed} n_entities={}", opts.n_entities))?;
    println!("entities: {}, evidence: {}", ds.entities.len(), ds.records.len());
    println!(
        "splits: train {}, val {}, test {}",
        ds.splits.train.len(),
        ds.splits.val.len(),
        ds.splits.test.len()
    );
    Ok(())
}

struct LoadedDataset {
    records: Vec<EvidenceRecord>,
    labels: BTreeMap<String, String>,
    splits: DatasetSplits,
    store: EvidenceStore,
}

fn load_dataset(config: &RunConfig) -> Result<LoadedDataset> {
    let dir = &config.dataset_dir;
    let entities_path = dir.join("entities.jsonl");
    let evidence_path = dir.join("evidence.jsonl");
    let splits_path = dir.join("splits.json");
    for path in [&entities_path, &evidence_path, &splits_path] {
        if !path.exists() {
            bail!("missing dataset file {} (run gen-data first)", path.display());
        }
    }
    let mut labels = BTreeMap::new();
    for line in BufReader::new(std::fs::File::open(&entities_path)?).lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let entity: SyntheticEntity = serde_json::from_str(&line)?;
        labels.insert(entity.company_id.clone(), entity.compliance_level.clone());
    }
    let mut records = Vec::new();
    for line in BufReader::new(std::fs::File::open(&evidence_path)?).lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        records.push(serde_json::from_str::<EvidenceRecord>(&line)?);
    }
    let splits: DatasetSplits = serde_json::from_str(&std::fs::read_to_string(&splits_path)?)?;

    let mut store = EvidenceStore::new();
    let sidecar = dir.join("embeddings.jsonl");
    if sidecar.exists() {
        store.load_embedding_sidecar(&sidecar)?;
    }
    let mut fresh: Vec<EvidenceRecord> = records.clone();
    for record in &mut fresh {
        record.embedding_id = None; // embedding ids are store-local
    }
    let report = store.ingest_records(fresh);
    if !report.rejections.is_empty() {
        bail!("evidence ingestion rejected {} rows", report.rejections.len());
    }
    let canonical = dir.join("canonical.jsonl");
    if canonical.exists() {
        store.load_canonical_jsonl(&canonical)?;
    }
    Ok(LoadedDataset { records, labels, splits, store })
}

fn cmd_train(config: &RunConfig, seeds: Option<Vec<u64>>) -> Result<()> {
    let data = load_dataset(config)?;
    let seeds = seeds.unwrap_or_else(|| config.seeds.clone());
    if seeds.is_empty() {
        bail!("no training seeds given");
    }
    let train = evidence_samples_from_records(&data.records, &data.labels, &data.splits.train)?;
    let val = evidence_samples_from_records(&data.records, &data.labels, &data.splits.val)?;
    let predicate = lpf_core::nets::PredicateSpec::new(
        dataset::COMPLIANCE_PREDICATE,
        &dataset::COMPLIANCE_DOMAIN,
    );
    println!(
        "training on {} evidence samples ({} validation), seeds {seeds:?}",
        train.len(),
        val.len()
    );
    let (encoder, decoder, search_report) =
        seed_search(&train, &val, vec![predicate], &config.train, &seeds)?;

    println!("seed   best_val_acc  best_val_loss  epochs  converged");
    for report in &search_report.reports {
        println!(
            "{:<6} {:<13.4} {:<14.4} {:<7} {}",
            report.seed,
            report.best_val_accuracy,
            report.best_val_loss,
            report.epochs_run,
            report.converged
        );
    }
    println!(
        "best seed: {} | val accuracy {:.4} ± {:.4} across {} seeds",
        search_report.best_seed,
        search_report.mean_best_val_accuracy,
        search_report.std_best_val_accuracy,
        seeds.len()
    );

    let entity_train =
        entity_samples_from_records(&data.records, &data.labels, &data.splits.train)?;
    let entity_val = entity_samples_from_records(&data.records, &data.labels, &data.splits.val)?;
    let (aggregator, agg_report) = train_aggregator(
        &encoder,
        &decoder,
        &entity_train,
        &entity_val,
        &config.aggregator,
        search_report.best_seed,
    )?;
    println!(
        "aggregator: {} epochs, val accuracy {:.4}, skipped entities {}",
        agg_report.epochs_run, agg_report.best_val_accuracy, agg_report.skipped_entities
    );

    std::fs::create_dir_all(&config.model_dir)?;
    let checkpoint = ModelCheckpoint::from_models(
        search_report.best_seed,
        &encoder,
        &decoder,
        Some(&aggregator),
    );
    checkpoint.save(&config.model_dir.join("model.json"))?;
    let summary = serde_json::json!({
        "seed_search": search_report,
        "aggregator": agg_report,
    });
    std::fs::write(
        config.model_dir.join("training_summary.json"),
        serde_json::to_string_pretty(&summary)?,
    )?;
    append_run_log(&config.model_dir, &format!("train seeds={seeds:?}"))?;
    println!(
        "checkpoint written to {}",
        config.model_dir.join("model.json").display()
    );
    Ok(())
}

fn load_models(
    config: &RunConfig,
) -> Result<(
    lpf_core::nets::EncoderModel,
    lpf_core::nets::DecoderModel,
    Option<lpf_core::nets::AggregatorModel>,
)> {
    let path = config.model_dir.join("model.json");
    if !path.exists() {
        bail!("missing checkpoint {} (run train first)", path.display());
    }
    Ok(ModelCheckpoint::load(&path)?.into_models()?)
}

fn cmd_infer(config: &RunConfig, entity: &str, predicate: &str, flags: &QueryFlags) -> Result<()> {
    let data = load_dataset(config)?;
    let (encoder, decoder, aggregator) = load_models(config)?;
    let mut opts = config.query.clone();
    flags.apply(&mut opts)?;
    let now = flags.now.clone().unwrap_or_else(now_iso);
    let orchestrator = Orchestrator::new(
        &data.store,
        &encoder,
        &decoder,
        aggregator.as_ref(),
        &[],
        now,
    )?;
    let mut ledger = Ledger::open(&config.ledger_file)?;
    let mut stream = RandomStream::new(flags.seed, 0);
    let result = orchestrator.handle_query(entity, predicate, &opts, &mut ledger, &mut stream)?;
    println!("{}", serde_json::to_string_pretty(&result)?);
    Ok(())
}

fn split_entities(data: &LoadedDataset, split: &str) -> Result<Vec<(String, usize)>> {
    let ids = match split {
        "train" => &data.splits.train,
        "val" => &data.splits.val,
        "test" => &data.splits.test,
        other => bail!("unknown split {other} (expected train, val, or test)"),
    };
    ids.iter()
        .map(|id| {
            let label = data
                .labels
                .get(id)
                .with_context(|| format!("label for {id}"))?;
            let index = dataset::COMPLIANCE_DOMAIN
                .iter()
                .position(|v| v == label)
                .with_context(|| format!("label {label} outside domain"))?;
            Ok((id.clone(), index))
        })
        .collect()
}

/// Drops wall-clock runtime fields so the persisted report is deterministic;
/// the raw runtimes land in a sidecar file instead.
fn strip_runtime_fields(value: &mut serde_json::Value) {
    match value {
        serde_json::Value::Object(map) => {
            map.remove("runtime_ms_mean");
            map.remove("runtime_ms_total");
            for v in map.values_mut() {
                strip_runtime_fields(v);
            }
        }
        serde_json::Value::Array(items) => {
            for v in items {
                strip_runtime_fields(v);
            }
        }
        _ => {}
    }
}

fn cmd_eval(config: &RunConfig, split: &str, flags: &QueryFlags) -> Result<()> {
    let data = load_dataset(config)?;
    let (encoder, decoder, aggregator) = load_models(config)?;
    let mut opts = config.query.clone();
    flags.apply(&mut opts)?;
    let now = flags.now.clone().unwrap_or_else(now_iso);
    let orchestrator = Orchestrator::new(
        &data.store,
        &encoder,
        &decoder,
        aggregator.as_ref(),
        &[],
        now,
    )?;
    let entities = split_entities(&data, split)?;
    let mut ledger = Ledger::open(&config.ledger_file)?;
    let outcome = evaluate_entities(
        &orchestrator,
        &mut ledger,
        &entities,
        dataset::COMPLIANCE_PREDICATE,
        &opts,
        flags.seed,
        EvalMethod::Variant,
    )?;

    std::fs::create_dir_all(&config.model_dir)?;
    let variant_name = match opts.variant {
        lpf_core::pipeline::Variant::Spn => "spn",
        lpf_core::pipeline::Variant::Learned => "learned",
    };
    let mut report_json = serde_json::to_value(&outcome.metrics)?;
    strip_runtime_fields(&mut report_json);
    let report_path = config
        .model_dir
        .join(format!("eval_{split}_{variant_name}.json"));
    std::fs::write(&report_path, serde_json::to_string_pretty(&report_json)?)?;
    let runtimes = serde_json::json!({
        "runtime_ms_mean": outcome.metrics.runtime_ms_mean,
        "runtime_ms_total": outcome.metrics.runtime_ms_total,
    });
    std::fs::write(
        config
            .model_dir
            .join(format!("eval_{split}_{variant_name}_runtimes.json")),
        serde_json::to_string_pretty(&runtimes)?,
    )?;
    append_run_log(
        &config.model_dir,
        &format!("eval split={split} variant={variant_name}"),
    )?;
    println!(
        "split {split} ({} entities, {variant_name}): accuracy {:.4}, macro F1 {:.4}, NLL {:.4}, Brier {:.4}, ECE {:.4}",
        outcome.metrics.n,
        outcome.metrics.accuracy,
        outcome.metrics.macro_f1,
        outcome.metrics.nll,
        outcome.metrics.brier,
        outcome.metrics.ece
    );
    println!("report: {}", report_path.display());
    Ok(())
}

fn cmd_ablate(
    config: &RunConfig,
    axis: &str,
    values: Option<Vec<f64>>,
    flags: &QueryFlags,
) -> Result<()> {
    let axis: AblationAxis = axis.parse()?;
    let values = values.unwrap_or_else(|| axis.default_grid());
    let data = load_dataset(config)?;
    let (encoder, decoder, aggregator) = load_models(config)?;
    let mut opts = config.query.clone();
    flags.apply(&mut opts)?;
    let now = flags.now.clone().unwrap_or_else(now_iso);
    let orchestrator = Orchestrator::new(
        &data.store,
        &encoder,
        &decoder,
        aggregator.as_ref(),
        &[],
        now,
    )?;
    let entities = split_entities(&data, "test")?;
    let mut ledger = Ledger::open(&config.ledger_file)?;
    let rows = run_ablation(
        &orchestrator,
        &mut ledger,
        &entities,
        dataset::COMPLIANCE_PREDICATE,
        axis,
        &values,
        &opts,
        flags.seed,
    )?;

    std::fs::create_dir_all(&config.model_dir)?;
    let mut rows_json = serde_json::to_value(&rows)?;
    strip_runtime_fields(&mut rows_json);
    let json_path = config
        .model_dir
        .join(format!("ablation_{}.json", axis.name()));
    std::fs::write(&json_path, serde_json::to_string_pretty(&rows_json)?)?;
    let table = ablation_table_text(&rows);
    std::fs::write(
        config.model_dir.join(format!("ablation_{}.txt", axis.name())),
        &table,
    )?;
    append_run_log(&config.model_dir, &format!("ablate axis={}", axis.name()))?;
    print!("{table}");
    println!("table: {}", json_path.display());
    Ok(())
}

fn cmd_verify_ledger(config: &RunConfig, path: Option<PathBuf>) -> Result<()> {
    let path = path.unwrap_or_else(|| config.ledger_file.clone());
    match ledger::verify(&path)? {
        VerifyOutcome::Ok { records } => {
            println!("ok: {records} records verified in {}", path.display());
            Ok(())
        }
        VerifyOutcome::Broken { line, record_id, reason, detail } => {
            bail!(
                "ledger broken at line {line} (record {}): {reason:?}: {detail}",
                record_id.unwrap_or_else(|| "?".into())
            );
        }
    }
}

fn cmd_replay_worked_example() -> Result<()> {
    let report = replay_worked_example()?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    println!(
        "spn top value: {} | learned top value: {}",
        report.spn_top_value, report.learned_top_value
    );
    if report.passed {
        println!("worked example replay: PASS");
        Ok(())
    } else {
        bail!("worked example replay FAILED: {:?}", report.failures)
    }
}
