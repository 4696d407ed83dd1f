//! Trainable network families: VAE encoder, conditional decoder, and the
//! learned-aggregator nets, plus their hand-derived gradients and the
//! two-stage training loops with seed search.

pub mod aggregator;
pub mod decoder;
pub mod encoder;
pub mod layers;
pub mod training;

pub use aggregator::{AggregateResult, AggregatorModel};
pub use decoder::{DecoderModel, PredicateSpec};
pub use encoder::EncoderModel;
pub use training::{
    aggregator_loss, elbo_loss, elbo_loss_with_noise, seed_search, train_aggregator,
    train_encoder_decoder, AggregatorTrainOptions, ElboOutput, EntitySample, EvidenceSample,
    SeedSearchReport, TrainOptions, TrainReport,
};

use crate::error::{LpfError, Result};
use crate::numerics::{DenseVector, RandomStream};

/// Floor applied to posterior standard deviations.
pub const SIGMA_MIN: f64 = 1e-6;

/// Diagonal-Gaussian latent posterior for one evidence item.
#[derive(Debug, Clone)]
pub struct LatentPosterior {
    pub evidence_id: String,
    pub mu: DenseVector,
    pub sigma: DenseVector,
    /// Always `1 / (1 + mean(sigma))`.
    pub confidence: f64,
}

impl LatentPosterior {
    /// Builds a posterior, clipping sigma to [`SIGMA_MIN`] and deriving the
    /// confidence from the clipped values.
    pub fn new(evidence_id: impl Into<String>, mu: DenseVector, sigma: DenseVector) -> Result<Self> {
        if mu.len() != sigma.len() {
            return Err(LpfError::ShapeMismatch(format!(
                "mu has {} dims, sigma has {}",
                mu.len(),
                sigma.len()
            )));
        }
        let mut sigma = sigma;
        for s in sigma.as_mut_slice() {
            if *s < SIGMA_MIN {
                *s = SIGMA_MIN;
            }
        }
        let confidence = 1.0 / (1.0 + sigma.mean());
        Ok(Self { evidence_id: evidence_id.into(), mu, sigma, confidence })
    }

    pub fn latent_dim(&self) -> usize {
        self.mu.len()
    }

    /// Element-wise log variance, `2 ln sigma`.
    pub fn log_var(&self) -> Vec<f64> {
        self.sigma.iter().map(|s| 2.0 * s.ln()).collect()
    }

    /// Element-wise log standard deviation.
    pub fn log_sigma(&self) -> Vec<f64> {
        self.sigma.iter().map(|s| s.ln()).collect()
    }

    pub fn mean_sigma(&self) -> f64 {
        self.sigma.mean()
    }
}

/// `z = mu + sigma ⊙ eps` with `eps ~ N(0, I)` drawn from the stream.
pub fn reparameterize(posterior: &LatentPosterior, stream: &mut RandomStream) -> DenseVector {
    let eps = stream.gaussian_vector(posterior.latent_dim());
    reparameterize_with(posterior, eps.as_slice())
}

/// Reparameterization with caller-supplied noise; the training loops use this
/// to keep epsilon fixed while checking gradients.
pub fn reparameterize_with(posterior: &LatentPosterior, eps: &[f64]) -> DenseVector {
    debug_assert_eq!(eps.len(), posterior.latent_dim());
    let values: Vec<f64> = posterior
        .mu
        .iter()
        .zip(posterior.sigma.iter())
        .zip(eps)
        .map(|((m, s), e)| m + s * e)
        .collect();
    DenseVector::new(values).expect("finite reparameterized sample")
}

/// KL(q ‖ N(0, I)) for a diagonal Gaussian:
/// `0.5 Σ_d (sigma_d² + mu_d² − 1 − log sigma_d²)`.
pub fn kl_to_standard_normal(posterior: &LatentPosterior) -> f64 {
    posterior
        .mu
        .iter()
        .zip(posterior.sigma.iter())
        .map(|(m, s)| 0.5 * (s * s + m * m - 1.0 - (s * s).ln()))
        .sum()
}
