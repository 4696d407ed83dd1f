//! Run configuration: a flat dotted-key text file, overridable by
//! environment variables (`LPF_` prefix, `.` spelled `__`) and then by
//! command-line flags.

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use lpf_core::nets::{AggregatorTrainOptions, TrainOptions};
use lpf_core::pipeline::{DatasetOptions, QueryOptions};

/// Everything a command needs to run.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub dataset_dir: PathBuf,
    pub model_dir: PathBuf,
    pub ledger_file: PathBuf,
    pub query: QueryOptions,
    pub train: TrainOptions,
    pub aggregator: AggregatorTrainOptions,
    pub seeds: Vec<u64>,
    pub data: DatasetOptions,
    pub ece_bins: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            dataset_dir: PathBuf::from("data"),
            model_dir: PathBuf::from("models"),
            ledger_file: PathBuf::from("ledger.jsonl"),
            query: QueryOptions::default(),
            train: TrainOptions::default(),
            aggregator: AggregatorTrainOptions::default(),
            seeds: vec![42, 123, 456, 789, 2024, 2025, 314159],
            data: DatasetOptions::default(),
            ece_bins: 10,
        }
    }
}

fn parse_list<T: std::str::FromStr>(value: &str) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<T>().map_err(|e| anyhow::anyhow!("{s}: {e}")))
        .collect()
}

impl RunConfig {
    /// Applies one dotted-key assignment.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key {
            "paths.dataset_dir" => self.dataset_dir = PathBuf::from(value),
            "paths.model_dir" => self.model_dir = PathBuf::from(value),
            "paths.ledger_file" => self.ledger_file = PathBuf::from(value),
            "query.top_k" => self.query.top_k = value.parse()?,
            "query.n_samples" => self.query.n_samples = value.parse()?,
            "query.temperature" => self.query.temperature = value.parse()?,
            "query.alpha" => self.query.alpha = value.parse()?,
            "query.variant" => self.query.variant = value.parse().map_err(anyhow::Error::from)?,
            "query.staleness_days" => self.query.staleness_days = value.parse()?,
            "train.learning_rate" => self.train.learning_rate = value.parse()?,
            "train.batch_size" => self.train.batch_size = value.parse()?,
            "train.beta" => self.train.beta = value.parse()?,
            "train.patience" => self.train.patience = value.parse()?,
            "train.max_epochs" => self.train.max_epochs = value.parse()?,
            "train.dropout" => self.train.dropout = value.parse()?,
            "train.latent_dim" => self.train.latent_dim = value.parse()?,
            "train.predicate_embed_dim" => self.train.predicate_embed_dim = value.parse()?,
            "train.encoder_hidden" => self.train.encoder_hidden = parse_list(value)?,
            "train.decoder_hidden" => self.train.decoder_hidden = parse_list(value)?,
            "aggregator.learning_rate" => self.aggregator.learning_rate = value.parse()?,
            "aggregator.batch_size" => self.aggregator.batch_size = value.parse()?,
            "aggregator.epochs" => self.aggregator.epochs = value.parse()?,
            "aggregator.dropout" => self.aggregator.dropout = value.parse()?,
            "seeds" => self.seeds = parse_list(value)?,
            "data.n_entities" => self.data.n_entities = value.parse()?,
            "data.evidence_per_entity" => self.data.evidence_per_entity = value.parse()?,
            "data.noise" => self.data.noise = value.parse()?,
            "metrics.ece_bins" => self.ece_bins = value.parse()?,
            other => bail!("unknown configuration key {other}"),
        }
        Ok(())
    }

    /// Parses a config file of `key = value` lines ('#' starts a comment).
    pub fn load(path: &std::path::Path) -> Result<Self> {
        let mut config = Self::default();
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .with_context(|| format!("line {}: expected key = value", i + 1))?;
            config
                .set(key.trim(), value)
                .with_context(|| format!("line {}", i + 1))?;
        }
        Ok(config)
    }

    /// Applies `LPF_`-prefixed environment variables; `__` stands for the
    /// dot (e.g. `LPF_QUERY__TOP_K=7` sets `query.top_k`).
    pub fn apply_env(&mut self) -> Result<()> {
        let mut overrides: Vec<(String, String)> = std::env::vars()
            .filter(|(name, _)| name.starts_with("LPF_"))
            .collect();
        overrides.sort();
        for (name, value) in overrides {
            let key = name
                .trim_start_matches("LPF_")
                .to_ascii_lowercase()
                .replace("__", ".");
            self.set(&key, &value)
                .with_context(|| format!("environment override {name}"))?;
        }
        Ok(())
    }
}
