//! Two-stage training: joint encoder-decoder optimization on evidence-level
//! labels, then aggregator training on entity-level labels with the
//! encoder/decoder frozen. Includes the seed-search protocol.

use super::aggregator::{AggregatorGrads, AggregatorModel};
use super::decoder::{DecoderGrads, DecoderModel, PredicateSpec};
use super::encoder::{EncoderGrads, EncoderModel};
use super::{kl_to_standard_normal, reparameterize_with, LatentPosterior};
use crate::error::{LpfError, Result};
use crate::numerics::{AdamState, DenseVector, RandomStream};

/// One evidence-level training sample: embedding, predicate, label index.
#[derive(Debug, Clone)]
pub struct EvidenceSample {
    pub embedding: DenseVector,
    pub predicate: String,
    pub label: usize,
}

/// One entity-level training sample for the aggregator stage.
#[derive(Debug, Clone)]
pub struct EntitySample {
    pub entity_id: String,
    pub embeddings: Vec<DenseVector>,
    pub predicate: String,
    pub label: usize,
}

/// Encoder/decoder training hyperparameters.
#[derive(Debug, Clone)]
pub struct TrainOptions {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub beta: f64,
    pub patience: usize,
    pub max_epochs: usize,
    pub dropout: f64,
    pub latent_dim: usize,
    pub predicate_embed_dim: usize,
    pub encoder_hidden: Vec<usize>,
    pub decoder_hidden: Vec<usize>,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            batch_size: 64,
            beta: 0.01,
            patience: 5,
            max_epochs: 100,
            dropout: 0.1,
            latent_dim: EncoderModel::DEFAULT_LATENT_DIM,
            predicate_embed_dim: DecoderModel::DEFAULT_PREDICATE_EMBED_DIM,
            encoder_hidden: EncoderModel::DEFAULT_HIDDEN.to_vec(),
            decoder_hidden: DecoderModel::DEFAULT_HIDDEN.to_vec(),
        }
    }
}

/// Aggregator training hyperparameters.
#[derive(Debug, Clone)]
pub struct AggregatorTrainOptions {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub dropout: f64,
}

impl Default for AggregatorTrainOptions {
    fn default() -> Self {
        Self { learning_rate: 1e-3, batch_size: 32, epochs: 30, dropout: 0.1 }
    }
}

/// Per-run training record.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TrainReport {
    pub seed: u64,
    pub epochs_run: usize,
    /// True when early stopping fired before the epoch budget ran out.
    pub converged: bool,
    pub train_loss: Vec<f64>,
    pub train_accuracy: Vec<f64>,
    pub val_loss: Vec<f64>,
    pub val_accuracy: Vec<f64>,
    pub best_val_loss: f64,
    /// Max validation accuracy over the epoch history.
    pub best_val_accuracy: f64,
    /// 1-based epoch whose checkpoint was kept (best validation loss).
    pub best_epoch: usize,
    /// Entities dropped for having zero evidence (aggregator stage only).
    pub skipped_entities: usize,
}

/// Seed-search outcome: one report per seed plus the cross-seed summary.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SeedSearchReport {
    pub reports: Vec<TrainReport>,
    pub best_seed: u64,
    pub mean_best_val_accuracy: f64,
    pub std_best_val_accuracy: f64,
}

/// Loss value plus parameter gradients for one ELBO evaluation.
#[derive(Debug)]
pub struct ElboOutput {
    pub loss: f64,
    pub encoder_grads: EncoderGrads,
    pub decoder_grads: DecoderGrads,
}

/// ELBO-style loss over a batch: mean cross-entropy of decoded distributions
/// at reparameterized samples plus `beta` times the mean KL to N(0, I).
/// Draws one noise vector per sample from the stream; dropout is active when
/// the models carry a nonzero rate.
pub fn elbo_loss(
    encoder: &EncoderModel,
    decoder: &DecoderModel,
    batch: &[EvidenceSample],
    beta: f64,
    stream: &mut RandomStream,
) -> Result<ElboOutput> {
    let eps: Vec<Vec<f64>> = batch
        .iter()
        .map(|_| stream.gaussian_vector(encoder.latent_dim()).into_vec())
        .collect();
    elbo_loss_with_noise(encoder, decoder, batch, beta, &eps, Some(stream))
}

/// ELBO loss with caller-supplied noise vectors (one per sample). Gradient
/// checks pass fixed noise and `None` dropout so finite differences see a
/// deterministic function of the parameters.
pub fn elbo_loss_with_noise(
    encoder: &EncoderModel,
    decoder: &DecoderModel,
    batch: &[EvidenceSample],
    beta: f64,
    eps: &[Vec<f64>],
    mut dropout: Option<&mut RandomStream>,
) -> Result<ElboOutput> {
    if batch.is_empty() {
        return Err(LpfError::Domain("elbo_loss needs a nonempty batch".into()));
    }
    if beta < 0.0 {
        return Err(LpfError::Domain("beta must be nonnegative".into()));
    }
    if eps.len() != batch.len() {
        return Err(LpfError::ShapeMismatch(format!(
            "{} noise vectors for {} samples",
            eps.len(),
            batch.len()
        )));
    }
    let mut encoder_grads = encoder.grads_like();
    let mut decoder_grads = decoder.grads_like();
    let mut total_loss = 0.0;
    let inv_n = 1.0 / batch.len() as f64;

    for (sample, noise) in batch.iter().zip(eps) {
        let domain = decoder.domain(&sample.predicate)?;
        if sample.label >= domain.len() {
            return Err(LpfError::Domain(format!(
                "label index {} outside domain of size {} for predicate {}",
                sample.label,
                domain.len(),
                sample.predicate
            )));
        }
        let enc_trace = encoder.forward(sample.embedding.as_slice(), dropout.as_deref_mut());
        let posterior = LatentPosterior::new(
            "",
            DenseVector::new(enc_trace.mu.clone()).expect("finite mu"),
            DenseVector::new(enc_trace.sigma.clone()).expect("finite sigma"),
        )?;
        let z = reparameterize_with(&posterior, noise);
        let dec_trace = decoder.forward(z.as_slice(), &sample.predicate, dropout.as_deref_mut())?;

        let ce = -dec_trace.probs[sample.label].max(1e-300).ln();
        let kl = kl_to_standard_normal(&posterior);
        total_loss += ce + beta * kl;

        // d(CE)/d(logits) = softmax − onehot.
        let mut d_logits = dec_trace.probs.clone();
        d_logits[sample.label] -= 1.0;
        let d_z = decoder.backward(&dec_trace, &d_logits, &mut decoder_grads);

        // z = mu + sigma ⊙ eps, KL adds beta·mu and beta·(sigma − 1/sigma).
        let sigma = posterior.sigma.as_slice();
        let mu = posterior.mu.as_slice();
        let d_mu: Vec<f64> = d_z.iter().zip(mu).map(|(dz, m)| dz + beta * m).collect();
        let d_sigma: Vec<f64> = d_z
            .iter()
            .zip(noise)
            .zip(sigma)
            .map(|((dz, e), s)| dz * e + beta * (s - 1.0 / s))
            .collect();
        encoder.backward(
            sample.embedding.as_slice(),
            &enc_trace,
            &d_mu,
            &d_sigma,
            &mut encoder_grads,
        );
    }

    encoder_grads.scale(inv_n);
    decoder_grads.scale(inv_n);
    Ok(ElboOutput {
        loss: total_loss * inv_n,
        encoder_grads,
        decoder_grads,
    })
}

/// Deterministic validation pass: decode at `z = mu`, no sampling, no dropout.
fn evaluate_split(
    encoder: &EncoderModel,
    decoder: &DecoderModel,
    samples: &[EvidenceSample],
    beta: f64,
) -> Result<(f64, f64)> {
    let mut loss = 0.0;
    let mut correct = 0usize;
    for sample in samples {
        let posterior = encoder.encode(&sample.embedding, "")?;
        let probs = decoder.decode(posterior.mu.as_slice(), &sample.predicate)?;
        loss += -probs[sample.label].max(1e-300).ln() + beta * kl_to_standard_normal(&posterior);
        let argmax = probs
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .map(|(i, _)| i)
            .unwrap();
        if argmax == sample.label {
            correct += 1;
        }
    }
    let n = samples.len() as f64;
    Ok((loss / n, correct as f64 / n))
}

/// Validation-loss early stopper with a patience budget.
#[derive(Debug)]
struct EarlyStopper {
    patience: usize,
    best: f64,
    since_improve: usize,
}

impl EarlyStopper {
    fn new(patience: usize) -> Self {
        Self { patience, best: f64::INFINITY, since_improve: 0 }
    }

    /// Returns `(improved, stop)` for this epoch's validation loss.
    fn observe(&mut self, val_loss: f64) -> (bool, bool) {
        if val_loss < self.best {
            self.best = val_loss;
            self.since_improve = 0;
            (true, false)
        } else {
            self.since_improve += 1;
            (false, self.since_improve >= self.patience)
        }
    }
}

/// Joint encoder-decoder training with Adam, early stopping on validation
/// loss, and checkpoint restoration from the best epoch.
pub fn train_encoder_decoder(
    train: &[EvidenceSample],
    val: &[EvidenceSample],
    predicates: Vec<PredicateSpec>,
    opts: &TrainOptions,
    seed: u64,
) -> Result<(EncoderModel, DecoderModel, TrainReport)> {
    if train.is_empty() || val.is_empty() {
        return Err(LpfError::Domain("train and val splits must be nonempty".into()));
    }
    if opts.batch_size == 0 || opts.batch_size > train.len() {
        return Err(LpfError::Domain(format!(
            "batch size {} outside [1, {}]",
            opts.batch_size,
            train.len()
        )));
    }
    let embed_dim = train[0].embedding.len();

    let mut init_stream = RandomStream::new(seed, 0);
    let mut encoder = EncoderModel::new(
        embed_dim,
        &opts.encoder_hidden,
        opts.latent_dim,
        opts.dropout,
        &mut init_stream,
    );
    let mut decoder = DecoderModel::new(
        opts.latent_dim,
        opts.predicate_embed_dim,
        &opts.decoder_hidden,
        predicates,
        opts.dropout,
        &mut init_stream,
    );
    let mut noise_stream = RandomStream::new(seed, 1);
    let mut shuffle_stream = RandomStream::new(seed, 2);

    let enc_count = encoder.param_count();
    let total = enc_count + decoder.param_count();
    let mut adam = AdamState::new(total, opts.learning_rate);

    let mut report = TrainReport {
        seed,
        epochs_run: 0,
        converged: false,
        train_loss: Vec::new(),
        train_accuracy: Vec::new(),
        val_loss: Vec::new(),
        val_accuracy: Vec::new(),
        best_val_loss: f64::INFINITY,
        best_val_accuracy: 0.0,
        best_epoch: 0,
        skipped_entities: 0,
    };
    let mut stopper = EarlyStopper::new(opts.patience);
    let mut best_params: Option<Vec<f64>> = None;

    let mut order: Vec<usize> = (0..train.len()).collect();
    for epoch in 1..=opts.max_epochs {
        shuffle_stream.shuffle(&mut order);
        let mut epoch_loss = 0.0;
        let mut epoch_correct = 0usize;
        for chunk in order.chunks(opts.batch_size) {
            let batch: Vec<EvidenceSample> =
                chunk.iter().map(|&i| train[i].clone()).collect();
            let out = elbo_loss(&encoder, &decoder, &batch, opts.beta, &mut noise_stream)?;
            epoch_loss += out.loss * batch.len() as f64;

            let mut grads = Vec::with_capacity(total);
            out.encoder_grads.append_params(&mut grads);
            out.decoder_grads.append_params(&mut grads);
            let mut params = encoder.flatten_params();
            params.extend(decoder.flatten_params());
            adam.apply(&mut params, &grads)?;
            encoder.load_params(&params[..enc_count])?;
            decoder.load_params(&params[enc_count..])?;

            // Cheap running accuracy on the just-updated model, mean decode.
            for sample in &batch {
                let posterior = encoder.encode(&sample.embedding, "")?;
                let probs = decoder.decode(posterior.mu.as_slice(), &sample.predicate)?;
                let argmax = probs
                    .iter()
                    .enumerate()
                    .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                    .map(|(i, _)| i)
                    .unwrap();
                if argmax == sample.label {
                    epoch_correct += 1;
                }
            }
        }
        let (val_loss, val_acc) = evaluate_split(&encoder, &decoder, val, opts.beta)?;
        report.train_loss.push(epoch_loss / train.len() as f64);
        report
            .train_accuracy
            .push(epoch_correct as f64 / train.len() as f64);
        report.val_loss.push(val_loss);
        report.val_accuracy.push(val_acc);
        report.epochs_run = epoch;

        let (improved, stop) = stopper.observe(val_loss);
        if improved {
            report.best_val_loss = val_loss;
            report.best_epoch = epoch;
            let mut params = encoder.flatten_params();
            params.extend(decoder.flatten_params());
            best_params = Some(params);
        }
        if stop {
            report.converged = true;
            break;
        }
    }
    report.best_val_accuracy = report
        .val_accuracy
        .iter()
        .copied()
        .fold(0.0f64, f64::max);

    if let Some(params) = best_params {
        encoder.load_params(&params[..enc_count])?;
        decoder.load_params(&params[enc_count..])?;
    }
    Ok((encoder, decoder, report))
}

/// Trains one model per seed and keeps the one with the highest validation
/// accuracy (ties broken toward the lowest seed value).
pub fn seed_search(
    train: &[EvidenceSample],
    val: &[EvidenceSample],
    predicates: Vec<PredicateSpec>,
    opts: &TrainOptions,
    seeds: &[u64],
) -> Result<(EncoderModel, DecoderModel, SeedSearchReport)> {
    if seeds.is_empty() {
        return Err(LpfError::Domain("seed list must be nonempty".into()));
    }
    let mut best: Option<(EncoderModel, DecoderModel, f64, u64)> = None;
    let mut reports = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let (encoder, decoder, report) =
            train_encoder_decoder(train, val, predicates.clone(), opts, seed)?;
        let acc = report.best_val_accuracy;
        let better = match &best {
            None => true,
            Some((_, _, best_acc, best_seed)) => {
                acc > *best_acc || (acc == *best_acc && seed < *best_seed)
            }
        };
        if better {
            best = Some((encoder, decoder, acc, seed));
        }
        reports.push(report);
    }
    let (encoder, decoder, _, best_seed) = best.expect("nonempty seed list");
    let accs: Vec<f64> = reports.iter().map(|r| r.best_val_accuracy).collect();
    let mean = accs.iter().sum::<f64>() / accs.len() as f64;
    let var = accs.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / accs.len() as f64;
    Ok((
        encoder,
        decoder,
        SeedSearchReport {
            reports,
            best_seed,
            mean_best_val_accuracy: mean,
            std_best_val_accuracy: var.sqrt(),
        },
    ))
}

/// Entity-level aggregator loss `−log p(y_true | z_agg)` with gradients for
/// the aggregator networks only. The decoder participates in the forward and
/// backward pass but its parameters stay untouched.
pub fn aggregator_loss(
    decoder: &DecoderModel,
    aggregator: &AggregatorModel,
    posteriors: &[LatentPosterior],
    predicate: &str,
    label: usize,
    dropout: Option<&mut RandomStream>,
) -> Result<(f64, AggregatorGrads)> {
    let (result, trace) = aggregator.aggregate_with_trace(posteriors, dropout)?;
    let dec_trace = decoder.forward(result.z_agg.as_slice(), predicate, None)?;
    let loss = -dec_trace.probs[label].max(1e-300).ln();

    let mut d_logits = dec_trace.probs.clone();
    d_logits[label] -= 1.0;
    // Scratch buffer: the decoder is frozen, only d(z_agg) is needed.
    let mut decoder_scratch = decoder.grads_like();
    let d_z = decoder.backward(&dec_trace, &d_logits, &mut decoder_scratch);

    let mut grads = aggregator.grads_like();
    aggregator.backward(posteriors, &trace, &d_z, &mut grads);
    Ok((loss, grads))
}

fn encode_entity(
    encoder: &EncoderModel,
    entity: &EntitySample,
) -> Result<Vec<LatentPosterior>> {
    entity
        .embeddings
        .iter()
        .enumerate()
        .map(|(i, e)| encoder.encode(e, &format!("{}#{}", entity.entity_id, i)))
        .collect()
}

fn evaluate_entities(
    decoder: &DecoderModel,
    aggregator: &AggregatorModel,
    entities: &[(Vec<LatentPosterior>, String, usize)],
) -> Result<(f64, f64)> {
    let mut loss = 0.0;
    let mut correct = 0usize;
    for (posteriors, predicate, label) in entities {
        let result = aggregator.aggregate_latent(posteriors)?;
        let probs = decoder.decode(result.z_agg.as_slice(), predicate)?;
        loss += -probs[*label].max(1e-300).ln();
        let argmax = probs
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .map(|(i, _)| i)
            .unwrap();
        if argmax == *label {
            correct += 1;
        }
    }
    let n = entities.len() as f64;
    Ok((loss / n, correct as f64 / n))
}

/// Stage-2 training: learns the aggregator on entity-level labels with the
/// encoder and decoder frozen (borrowed immutably throughout). Entities with
/// zero evidence are skipped and counted in the report.
pub fn train_aggregator(
    encoder: &EncoderModel,
    decoder: &DecoderModel,
    train: &[EntitySample],
    val: &[EntitySample],
    opts: &AggregatorTrainOptions,
    seed: u64,
) -> Result<(AggregatorModel, TrainReport)> {
    let mut init_stream = RandomStream::new(seed, 10);
    let mut aggregator =
        AggregatorModel::with_defaults(encoder.latent_dim(), opts.dropout, &mut init_stream);
    let mut dropout_stream = RandomStream::new(seed, 11);
    let mut shuffle_stream = RandomStream::new(seed, 12);

    let mut skipped = 0usize;
    let mut encoded_train = Vec::with_capacity(train.len());
    for entity in train {
        if entity.embeddings.is_empty() {
            skipped += 1;
            continue;
        }
        encoded_train.push((
            encode_entity(encoder, entity)?,
            entity.predicate.clone(),
            entity.label,
        ));
    }
    let mut encoded_val = Vec::with_capacity(val.len());
    for entity in val {
        if entity.embeddings.is_empty() {
            skipped += 1;
            continue;
        }
        encoded_val.push((
            encode_entity(encoder, entity)?,
            entity.predicate.clone(),
            entity.label,
        ));
    }
    if encoded_train.is_empty() || encoded_val.is_empty() {
        return Err(LpfError::Domain(
            "aggregator training needs nonempty train and val entity sets".into(),
        ));
    }

    let mut adam = AdamState::new(aggregator.param_count(), opts.learning_rate);
    let mut report = TrainReport {
        seed,
        epochs_run: 0,
        converged: false,
        train_loss: Vec::new(),
        train_accuracy: Vec::new(),
        val_loss: Vec::new(),
        val_accuracy: Vec::new(),
        best_val_loss: f64::INFINITY,
        best_val_accuracy: 0.0,
        best_epoch: 0,
        skipped_entities: skipped,
    };

    let mut order: Vec<usize> = (0..encoded_train.len()).collect();
    for epoch in 1..=opts.epochs {
        shuffle_stream.shuffle(&mut order);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(opts.batch_size) {
            let mut grads_sum = aggregator.grads_like();
            let mut batch_loss = 0.0;
            for &idx in chunk {
                let (posteriors, predicate, label) = &encoded_train[idx];
                let dropout = if opts.dropout > 0.0 {
                    Some(&mut dropout_stream)
                } else {
                    None
                };
                let (loss, grads) =
                    aggregator_loss(decoder, &aggregator, posteriors, predicate, *label, dropout)?;
                batch_loss += loss;
                accumulate_aggregator_grads(&mut grads_sum, &grads);
            }
            epoch_loss += batch_loss;
            grads_sum.scale(1.0 / chunk.len() as f64);
            let mut flat_grads = Vec::with_capacity(aggregator.param_count());
            grads_sum.append_params(&mut flat_grads);
            let mut params = aggregator.flatten_params();
            adam.apply(&mut params, &flat_grads)?;
            aggregator.load_params(&params)?;
        }
        let train_metrics = evaluate_entities(decoder, &aggregator, &encoded_train)?;
        let (val_loss, val_acc) = evaluate_entities(decoder, &aggregator, &encoded_val)?;
        report.train_loss.push(epoch_loss / encoded_train.len() as f64);
        report.train_accuracy.push(train_metrics.1);
        report.val_loss.push(val_loss);
        report.val_accuracy.push(val_acc);
        report.epochs_run = epoch;
        if val_loss < report.best_val_loss {
            report.best_val_loss = val_loss;
            report.best_epoch = epoch;
        }
    }
    report.best_val_accuracy = report
        .val_accuracy
        .iter()
        .copied()
        .fold(0.0f64, f64::max);
    Ok((aggregator, report))
}

fn accumulate_aggregator_grads(acc: &mut AggregatorGrads, add: &AggregatorGrads) {
    let pairs = [
        (&mut acc.quality, &add.quality),
        (&mut acc.consistency, &add.consistency),
        (&mut acc.weight, &add.weight),
    ];
    for (a, b) in pairs {
        for (ga, gb) in a.stack.iter_mut().zip(&b.stack) {
            for (x, y) in ga.weight.as_mut_slice().iter_mut().zip(gb.weight.as_slice()) {
                *x += y;
            }
            for (x, y) in ga.bias.iter_mut().zip(&gb.bias) {
                *x += y;
            }
        }
        for (x, y) in a.out.weight.as_mut_slice().iter_mut().zip(b.out.weight.as_slice()) {
            *x += y;
        }
        for (x, y) in a.out.bias.iter_mut().zip(&b.out.bias) {
            *x += y;
        }
    }
}
