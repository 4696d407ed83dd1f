//! Query orchestration: canonical fast path, evidence retrieval, encoding,
//! factor conversion plus SPN inference or learned latent aggregation, and
//! provenance logging. Also hosts the synthetic dataset generator, the
//! metrics suite, and the ablation harness.

pub mod ablation;
pub mod dataset;
pub mod metrics;
pub mod worked_example;

pub use ablation::{ablation_table_text, run_ablation, AblationAxis, AblationRow};
pub use dataset::{
    entity_samples_from_records, evidence_samples_from_records, generate_compliance_dataset,
    ComplianceDataset, DatasetOptions, DatasetSplits, SyntheticEntity, SyntheticEvidence,
};
pub use metrics::{compute_metrics, MetricsReport, SelectiveRow};
pub use worked_example::{replay_worked_example, WorkedExampleFixture, WorkedExampleReport};

use std::collections::BTreeMap;
use std::time::Instant;

use crate::error::{LpfError, Result};
use crate::evidence::{EvidenceStore, CANONICAL_STALENESS_DAYS};
use crate::factors::{convert, ConversionOptions, SoftFactor, WeightMode};
use crate::ledger::{FactorMeta, Ledger, RecordDraft};
use crate::nets::{
    reparameterize, AggregatorModel, DecoderModel, EncoderModel, LatentPosterior,
};
use crate::numerics::RandomStream;
use crate::spn::{PriorSpec, SpnCircuit};

/// Aggregation variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Variant {
    Spn,
    Learned,
}

impl std::str::FromStr for Variant {
    type Err = LpfError;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "spn" => Ok(Variant::Spn),
            "learned" => Ok(Variant::Learned),
            other => Err(LpfError::Domain(format!("unknown variant {other}"))),
        }
    }
}

/// Per-query knobs; defaults follow the reference configuration.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct QueryOptions {
    pub top_k: usize,
    pub n_samples: usize,
    pub temperature: f64,
    pub alpha: f64,
    pub variant: Variant,
    pub weight_mode: WeightMode,
    pub staleness_days: i64,
}

impl Default for QueryOptions {
    fn default() -> Self {
        Self {
            top_k: 5,
            n_samples: 16,
            temperature: 1.0,
            alpha: 2.0,
            variant: Variant::Spn,
            weight_mode: WeightMode::Composite,
            staleness_days: CANONICAL_STALENESS_DAYS,
        }
    }
}

impl QueryOptions {
    pub fn conversion_options(&self) -> ConversionOptions {
        ConversionOptions {
            n_samples: self.n_samples,
            temperature: self.temperature,
            alpha: self.alpha,
            weight_mode: self.weight_mode,
        }
    }

    pub fn hyperparameter_map(&self) -> BTreeMap<String, f64> {
        [
            ("n_samples".to_string(), self.n_samples as f64),
            ("temperature".to_string(), self.temperature),
            ("alpha".to_string(), self.alpha),
            ("top_k".to_string(), self.top_k as f64),
        ]
        .into_iter()
        .collect()
    }
}

/// Where a query's answer came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ResultSource {
    Canonical,
    Inference,
    NoEvidence,
}

impl std::fmt::Display for ResultSource {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ResultSource::Canonical => write!(f, "canonical"),
            ResultSource::Inference => write!(f, "inference"),
            ResultSource::NoEvidence => write!(f, "no-evidence"),
        }
    }
}

/// Answer to one epistemic query.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct QueryResult {
    pub entity_id: String,
    pub predicate: String,
    pub domain: Vec<String>,
    pub probabilities: Vec<f64>,
    pub distribution: BTreeMap<String, f64>,
    pub top_value: String,
    pub confidence: f64,
    pub source: ResultSource,
    pub evidence_chain: Vec<String>,
    /// Audit pointer; absent for canonical and no-evidence answers.
    pub record_id: Option<String>,
    pub execution_time_ms: f64,
    /// Credibility weights of the converted factors (SPN variant only).
    pub factor_weights: Vec<f64>,
}

/// Exact epistemic/aleatoric split of the predictive variance per class.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct UncertaintyDecomposition {
    pub domain: Vec<String>,
    pub total: Vec<f64>,
    pub epistemic: Vec<f64>,
    pub aleatoric: Vec<f64>,
}

/// Argmax index with lowest-index tie-break.
pub fn argmax(probabilities: &[f64]) -> usize {
    let mut best = 0;
    for (i, p) in probabilities.iter().enumerate().skip(1) {
        if *p > probabilities[best] {
            best = i;
        }
    }
    best
}

/// Everything a query needs, wired once: stores, models, cached circuits,
/// priors, and version strings for provenance.
pub struct Orchestrator<'a> {
    pub store: &'a EvidenceStore,
    pub encoder: &'a EncoderModel,
    pub decoder: &'a DecoderModel,
    pub aggregator: Option<&'a AggregatorModel>,
    circuits: BTreeMap<String, SpnCircuit>,
    pub model_versions: BTreeMap<String, String>,
    /// Reference instant for canonical staleness checks (ISO-8601).
    pub now: String,
}

impl<'a> Orchestrator<'a> {
    /// Compiles and caches one single-predicate circuit per supplied prior.
    /// With no priors, every decoder predicate gets a uniform-prior circuit;
    /// otherwise coverage follows the prior list and queries on uncovered
    /// predicates fall back to plain posterior averaging.
    pub fn new(
        store: &'a EvidenceStore,
        encoder: &'a EncoderModel,
        decoder: &'a DecoderModel,
        aggregator: Option<&'a AggregatorModel>,
        priors: &[PriorSpec],
        now: impl Into<String>,
    ) -> Result<Self> {
        let mut circuits = BTreeMap::new();
        if priors.is_empty() {
            for spec in decoder.predicates() {
                let refs: Vec<&str> = spec.domain.iter().map(String::as_str).collect();
                let prior = PriorSpec::uniform(&spec.name, &refs);
                circuits
                    .insert(spec.name.clone(), SpnCircuit::build_single_predicate(&prior)?);
            }
        } else {
            for prior in priors {
                decoder.predicate_index(&prior.predicate)?;
                circuits.insert(
                    prior.predicate.clone(),
                    SpnCircuit::build_single_predicate(prior)?,
                );
            }
        }
        let model_versions: BTreeMap<String, String> = [
            ("encoder".to_string(), "vae_v1.0".to_string()),
            ("decoder".to_string(), "decoder_v1.0".to_string()),
        ]
        .into_iter()
        .chain(
            aggregator
                .is_some()
                .then(|| ("aggregator".to_string(), "aggregator_v1.0".to_string())),
        )
        .collect();
        Ok(Self {
            store,
            encoder,
            decoder,
            aggregator,
            circuits,
            model_versions,
            now: now.into(),
        })
    }

    pub fn circuit(&self, predicate: &str) -> Option<&SpnCircuit> {
        self.circuits.get(predicate)
    }

    fn encode_chain(&self, evidence_ids: &[String]) -> Result<Vec<LatentPosterior>> {
        evidence_ids
            .iter()
            .map(|id| {
                let embedding = self.store.embedding_of(id)?;
                self.encoder.encode(embedding, id)
            })
            .collect()
    }

    /// Full query path: canonical fast path, retrieval, encoding, one of the
    /// two aggregation variants, provenance append.
    pub fn handle_query(
        &self,
        entity_id: &str,
        predicate: &str,
        opts: &QueryOptions,
        ledger: &mut Ledger,
        stream: &mut RandomStream,
    ) -> Result<QueryResult> {
        let started = Instant::now();
        let domain = self.decoder.domain(predicate)?.to_vec();

        if let Some(fact) =
            self.store
                .canonical_get(entity_id, predicate, &self.now, opts.staleness_days)?
        {
            let idx = domain.iter().position(|v| *v == fact.value).ok_or_else(|| {
                LpfError::Domain(format!(
                    "canonical value {} outside domain of {predicate}",
                    fact.value
                ))
            })?;
            let mut probabilities = vec![0.0; domain.len()];
            probabilities[idx] = 1.0;
            return Ok(self.result_from(
                entity_id,
                predicate,
                domain,
                probabilities,
                ResultSource::Canonical,
                Vec::new(),
                None,
                Vec::new(),
                started.elapsed().as_secs_f64() * 1e3,
            ));
        }

        let evidence_ids = self.store.search(entity_id, predicate, opts.top_k, None);
        if evidence_ids.is_empty() {
            let probabilities = vec![1.0 / domain.len() as f64; domain.len()];
            return Ok(self.result_from(
                entity_id,
                predicate,
                domain,
                probabilities,
                ResultSource::NoEvidence,
                Vec::new(),
                None,
                Vec::new(),
                started.elapsed().as_secs_f64() * 1e3,
            ));
        }

        let posteriors = self.encode_chain(&evidence_ids)?;
        let (probabilities, factors) = match opts.variant {
            Variant::Spn => {
                let circuit = self.circuits.get(predicate);
                match circuit {
                    Some(circuit) if circuit.covers(predicate) => {
                        let conv = opts.conversion_options();
                        let mut factors = Vec::with_capacity(posteriors.len());
                        for posterior in &posteriors {
                            factors.push(convert(posterior, predicate, self.decoder, &conv, stream)?);
                        }
                        let mut runtime = circuit.runtime();
                        for factor in &factors {
                            runtime.attach_likelihood(factor)?;
                        }
                        let marginal = runtime.marginal(predicate)?;
                        (marginal.probabilities, factors)
                    }
                    // Plain posterior averaging when no circuit covers the
                    // predicate.
                    _ => (
                        aggregate_vae_predictions(
                            &posteriors,
                            predicate,
                            self.decoder,
                            opts.n_samples,
                            stream,
                        )?,
                        Vec::new(),
                    ),
                }
            }
            Variant::Learned => {
                let aggregator = self.aggregator.ok_or_else(|| {
                    LpfError::Domain("learned variant requires a trained aggregator".into())
                })?;
                let result = aggregator.aggregate_latent(&posteriors)?;
                let probs = self.decoder.decode(result.z_agg.as_slice(), predicate)?;
                let pseudo_factors: Vec<FactorMeta> = evidence_ids
                    .iter()
                    .zip(&result.weights)
                    .map(|(id, w)| FactorMeta {
                        evidence_id: id.clone(),
                        potential: BTreeMap::new(),
                        weight: *w,
                    })
                    .collect();
                let elapsed = started.elapsed().as_secs_f64() * 1e3;
                let top = argmax(&probs);
                let draft = RecordDraft {
                    timestamp: self.now.clone(),
                    entity_id: entity_id.to_string(),
                    predicate: predicate.to_string(),
                    distribution: domain.iter().cloned().zip(probs.iter().copied()).collect(),
                    top_value: domain[top].clone(),
                    confidence: probs[top],
                    evidence_chain: evidence_ids.clone(),
                    factor_metadata: pseudo_factors,
                    model_versions: self.model_versions.clone(),
                    hyperparameters: opts.hyperparameter_map(),
                    execution_time_ms: elapsed,
                    };
                let (record_id, _) = ledger.append(draft)?;
                return Ok(self.result_from(
                    entity_id,
                    predicate,
                    domain,
                    probs,
                    ResultSource::Inference,
                    evidence_ids,
                    Some(record_id),
                    result.weights,
                    elapsed,
                ));
            }
        };

        let elapsed = started.elapsed().as_secs_f64() * 1e3;
        let top = argmax(&probabilities);
        let factor_metadata: Vec<FactorMeta> = factors
            .iter()
            .map(|f: &SoftFactor| FactorMeta {
                evidence_id: f.evidence_id.clone(),
                potential: f.potential.clone(),
                weight: f.weight,
            })
            .collect();
        let factor_weights: Vec<f64> = factors.iter().map(|f| f.weight).collect();
        let draft = RecordDraft {
            timestamp: self.now.clone(),
            entity_id: entity_id.to_string(),
            predicate: predicate.to_string(),
            distribution: domain
                .iter()
                .cloned()
                .zip(probabilities.iter().copied())
                .collect(),
            top_value: domain[top].clone(),
            confidence: probabilities[top],
            evidence_chain: evidence_ids.clone(),
            factor_metadata,
            model_versions: self.model_versions.clone(),
            hyperparameters: opts.hyperparameter_map(),
            execution_time_ms: elapsed,
        };
        let (record_id, _) = ledger.append(draft)?;
        Ok(self.result_from(
            entity_id,
            predicate,
            domain,
            probabilities,
            ResultSource::Inference,
            evidence_ids,
            Some(record_id),
            factor_weights,
            elapsed,
        ))
    }

    #[allow(clippy::too_many_arguments)]
    fn result_from(
        &self,
        entity_id: &str,
        predicate: &str,
        domain: Vec<String>,
        probabilities: Vec<f64>,
        source: ResultSource,
        evidence_chain: Vec<String>,
        record_id: Option<String>,
        factor_weights: Vec<f64>,
        execution_time_ms: f64,
    ) -> QueryResult {
        let top = argmax(&probabilities);
        QueryResult {
            entity_id: entity_id.to_string(),
            predicate: predicate.to_string(),
            distribution: domain
                .iter()
                .cloned()
                .zip(probabilities.iter().copied())
                .collect(),
            top_value: domain[top].clone(),
            confidence: probabilities[top],
            domain,
            probabilities,
            source,
            evidence_chain,
            record_id,
            execution_time_ms,
            factor_weights,
        }
    }

    /// Baseline path: retrieval + encoding + plain posterior averaging,
    /// bypassing both aggregation variants. No provenance record.
    pub fn baseline_distribution(
        &self,
        entity_id: &str,
        predicate: &str,
        opts: &QueryOptions,
        stream: &mut RandomStream,
    ) -> Result<Vec<f64>> {
        let evidence_ids = self.store.search(entity_id, predicate, opts.top_k, None);
        if evidence_ids.is_empty() {
            return Err(LpfError::NoEvidence);
        }
        let posteriors = self.encode_chain(&evidence_ids)?;
        aggregate_vae_predictions(&posteriors, predicate, self.decoder, opts.n_samples, stream)
    }
}

/// Mean over evidence of Monte Carlo-averaged decoded distributions,
/// renormalized.
pub fn aggregate_vae_predictions(
    posteriors: &[LatentPosterior],
    predicate: &str,
    decoder: &DecoderModel,
    n_samples: usize,
    stream: &mut RandomStream,
) -> Result<Vec<f64>> {
    if posteriors.is_empty() {
        return Err(LpfError::NoEvidence);
    }
    let domain_len = decoder.domain(predicate)?.len();
    let mut mean = vec![0.0; domain_len];
    for posterior in posteriors {
        let mut per_evidence = vec![0.0; domain_len];
        for _ in 0..n_samples.max(1) {
            let z = reparameterize(posterior, stream);
            let probs = decoder.decode(z.as_slice(), predicate)?;
            for (acc, p) in per_evidence.iter_mut().zip(&probs) {
                *acc += p;
            }
        }
        for (acc, pe) in mean.iter_mut().zip(&per_evidence) {
            *acc += pe / n_samples.max(1) as f64;
        }
    }
    let total: f64 = mean.iter().sum();
    Ok(mean.into_iter().map(|m| m / total).collect())
}

/// Splits predictive variance per class indicator into epistemic (variance
/// of the decoded probability across latent samples) and aleatoric (mean
/// Bernoulli variance at each sample). The total is computed independently
/// from the pooled mean, so the additive identity is a real check.
pub fn uncertainty_decompose(
    posteriors: &[LatentPosterior],
    predicate: &str,
    decoder: &DecoderModel,
    n_samples: usize,
    stream: &mut RandomStream,
) -> Result<UncertaintyDecomposition> {
    if posteriors.is_empty() {
        return Err(LpfError::NoEvidence);
    }
    if n_samples < 2 {
        return Err(LpfError::Domain("uncertainty decomposition needs M >= 2".into()));
    }
    let domain = decoder.domain(predicate)?.to_vec();
    let mut pooled: Vec<Vec<f64>> = Vec::with_capacity(posteriors.len() * n_samples);
    for posterior in posteriors {
        for _ in 0..n_samples {
            let z = reparameterize(posterior, stream);
            pooled.push(decoder.decode(z.as_slice(), predicate)?);
        }
    }
    let n = pooled.len() as f64;
    let mut total = Vec::with_capacity(domain.len());
    let mut epistemic = Vec::with_capacity(domain.len());
    let mut aleatoric = Vec::with_capacity(domain.len());
    for k in 0..domain.len() {
        let mean_p: f64 = pooled.iter().map(|row| row[k]).sum::<f64>() / n;
        let var_p: f64 = pooled.iter().map(|row| (row[k] - mean_p).powi(2)).sum::<f64>() / n;
        let mean_bernoulli: f64 = pooled.iter().map(|row| row[k] * (1.0 - row[k])).sum::<f64>() / n;
        total.push(mean_p * (1.0 - mean_p));
        epistemic.push(var_p);
        aleatoric.push(mean_bernoulli);
    }
    Ok(UncertaintyDecomposition { domain, total, epistemic, aleatoric })
}

/// One evaluated query: predicted distribution, true label index, runtime.
#[derive(Debug, Clone)]
pub struct EvalPrediction {
    pub entity_id: String,
    pub probabilities: Vec<f64>,
    pub label: usize,
    pub runtime_ms: f64,
}

/// Outcome of evaluating a labeled entity set.
#[derive(Debug, Clone)]
pub struct EvalOutcome {
    pub metrics: MetricsReport,
    pub predictions: Vec<EvalPrediction>,
    /// Mean credibility weight over all converted factors (SPN variant).
    pub mean_factor_weight: Option<f64>,
}

/// How to answer queries during an evaluation run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalMethod {
    Variant,
    VaeBaseline,
}

/// Evaluates labeled entities with per-entity substreams
/// (stream id = entity index) and deterministic ledger append order.
pub fn evaluate_entities(
    orchestrator: &Orchestrator<'_>,
    ledger: &mut Ledger,
    entities: &[(String, usize)],
    predicate: &str,
    opts: &QueryOptions,
    seed: u64,
    method: EvalMethod,
) -> Result<EvalOutcome> {
    if entities.is_empty() {
        return Err(LpfError::Domain("evaluation needs at least one entity".into()));
    }
    let n_classes = orchestrator.decoder.domain(predicate)?.len();
    let mut predictions = Vec::with_capacity(entities.len());
    let mut weight_sum = 0.0;
    let mut weight_count = 0usize;
    for (index, (entity_id, label)) in entities.iter().enumerate() {
        let mut stream = RandomStream::new(seed, index as u64);
        let (probabilities, runtime_ms) = match method {
            EvalMethod::Variant => {
                let result =
                    orchestrator.handle_query(entity_id, predicate, opts, ledger, &mut stream)?;
                for w in &result.factor_weights {
                    weight_sum += w;
                    weight_count += 1;
                }
                (result.probabilities, result.execution_time_ms)
            }
            EvalMethod::VaeBaseline => {
                let started = Instant::now();
                let probs =
                    orchestrator.baseline_distribution(entity_id, predicate, opts, &mut stream)?;
                (probs, started.elapsed().as_secs_f64() * 1e3)
            }
        };
        predictions.push(EvalPrediction {
            entity_id: entity_id.clone(),
            probabilities,
            label: *label,
            runtime_ms,
        });
    }
    let pairs: Vec<(Vec<f64>, usize)> = predictions
        .iter()
        .map(|p| (p.probabilities.clone(), p.label))
        .collect();
    let runtimes: Vec<f64> = predictions.iter().map(|p| p.runtime_ms).collect();
    let metrics = compute_metrics(&pairs, &runtimes, n_classes, 10)?;
    Ok(EvalOutcome {
        metrics,
        predictions,
        mean_factor_weight: (weight_count > 0).then(|| weight_sum / weight_count as f64),
    })
}
