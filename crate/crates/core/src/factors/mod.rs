//! Conversion of latent posteriors into weighted soft likelihood factors:
//! Monte Carlo decoding, temperature scaling, and uncertainty-penalized
//! credibility weights.

use std::collections::BTreeMap;

use crate::error::{LpfError, Result};
use crate::nets::{reparameterize, DecoderModel, LatentPosterior};
use crate::numerics::{DenseVector, RandomStream};

/// Small constant added before every normalization.
pub const EPS_SMALL: f64 = 1e-8;

/// Floor applied to probabilities before power transforms so the log-space
/// circuit downstream always sees finite logs.
pub const PROB_FLOOR: f64 = 1e-12;

/// Which credibility-weight formula a conversion uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
pub enum WeightMode {
    /// `base_confidence × 1/(1 + exp(alpha · mean(sigma)))`, the composite
    /// form used by the conversion algorithm.
    #[default]
    Composite,
    /// `1/(1 + exp(alpha · mean(sigma)))` alone, without the base-confidence
    /// factor.
    CalibrationOnly,
}

/// Conversion hyperparameters.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct ConversionOptions {
    /// Monte Carlo sample count M.
    pub n_samples: usize,
    /// Temperature T applied to the averaged potential.
    pub temperature: f64,
    /// Uncertainty-penalty strength alpha.
    pub alpha: f64,
    pub weight_mode: WeightMode,
}

impl Default for ConversionOptions {
    fn default() -> Self {
        Self { n_samples: 16, temperature: 1.0, alpha: 2.0, weight_mode: WeightMode::Composite }
    }
}

impl ConversionOptions {
    fn validate(&self) -> Result<()> {
        if self.n_samples == 0 {
            return Err(LpfError::Domain("n_samples must be >= 1".into()));
        }
        if self.temperature <= 0.0 {
            return Err(LpfError::Domain("temperature must be positive".into()));
        }
        if self.alpha < 0.0 {
            return Err(LpfError::Domain("alpha must be nonnegative".into()));
        }
        Ok(())
    }
}

/// Conversion provenance carried on every factor.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct FactorMetadata {
    pub n_samples: usize,
    pub temperature: f64,
    pub mean_sigma: f64,
    pub base_confidence: f64,
}

/// A weighted likelihood potential over one predicate's domain.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SoftFactor {
    pub evidence_id: String,
    pub variables: Vec<String>,
    /// Always the literal "likelihood".
    pub factor_type: String,
    /// Normalized potential over domain values.
    pub potential: BTreeMap<String, f64>,
    /// Credibility weight in (0, 1].
    pub weight: f64,
    pub metadata: FactorMetadata,
}

impl SoftFactor {
    /// Potential looked up in a fixed domain order.
    pub fn potential_vec(&self, domain: &[String]) -> Result<Vec<f64>> {
        domain
            .iter()
            .map(|v| {
                self.potential
                    .get(v)
                    .copied()
                    .ok_or_else(|| LpfError::Domain(format!("potential missing value {v}")))
            })
            .collect()
    }
}

/// `1 / (1 + exp(alpha · mean(sigma)))`, strictly in (0, 1/2] for
/// nonnegative alpha and positive sigma. Evaluated in the exp(-x) form and
/// floored so extreme uncertainty still yields a usable positive weight.
pub fn calibration_weight(sigma: &DenseVector, alpha: f64) -> f64 {
    let x = alpha * sigma.mean();
    let w = (-x).exp() / (1.0 + (-x).exp());
    w.max(1e-300)
}

/// Exact normalization; the epsilon only guards the all-zero degenerate case.
fn normalize_in_place(dist: &mut [f64]) {
    let mut total: f64 = dist.iter().sum();
    if total <= 0.0 {
        total += EPS_SMALL;
    }
    for v in dist.iter_mut() {
        *v /= total;
    }
}

/// Raises each entry to `1/T` and renormalizes. `T = 1` is the identity.
pub fn temperature_scale(dist: &[f64], temperature: f64) -> Result<Vec<f64>> {
    if temperature <= 0.0 {
        return Err(LpfError::Domain("temperature must be positive".into()));
    }
    if temperature == 1.0 {
        return Ok(dist.to_vec());
    }
    let mut out: Vec<f64> = dist
        .iter()
        .map(|p| p.max(PROB_FLOOR).powf(1.0 / temperature))
        .collect();
    normalize_in_place(&mut out);
    Ok(out)
}

/// Power-transform damping: raises each entry to `w` and renormalizes.
/// Entries are floored at [`PROB_FLOOR`] first so zero probabilities stay
/// representable in log space downstream.
pub fn apply_weight(dist: &[f64], weight: f64) -> Result<Vec<f64>> {
    if !(0.0..=1.0).contains(&weight) || weight == 0.0 {
        return Err(LpfError::Domain(format!("weight {weight} outside (0, 1]")));
    }
    if weight == 1.0 {
        return Ok(dist.to_vec());
    }
    let mut out: Vec<f64> = dist
        .iter()
        .map(|p| p.max(PROB_FLOOR).powf(weight))
        .collect();
    normalize_in_place(&mut out);
    Ok(out)
}

/// Samples needed for a target Monte Carlo standard error:
/// `M = ceil(0.25 / eps²)`.
pub fn mc_sample_size_for_error(eps: f64) -> Result<usize> {
    if eps <= 0.0 {
        return Err(LpfError::Domain("target error must be positive".into()));
    }
    Ok((0.25 / (eps * eps)).ceil() as usize)
}

/// Converts one latent posterior into a weighted soft factor: draw M
/// reparameterized samples, decode each, average, temperature-scale,
/// normalize, and attach the credibility weight.
pub fn convert(
    posterior: &LatentPosterior,
    predicate: &str,
    decoder: &DecoderModel,
    opts: &ConversionOptions,
    stream: &mut RandomStream,
) -> Result<SoftFactor> {
    opts.validate()?;
    let domain = decoder.domain(predicate)?.to_vec();

    let mut aggregated = vec![0.0; domain.len()];
    for _ in 0..opts.n_samples {
        let z = reparameterize(posterior, stream);
        let probs = decoder.decode(z.as_slice(), predicate)?;
        for (acc, p) in aggregated.iter_mut().zip(&probs) {
            *acc += p;
        }
    }
    for v in &mut aggregated {
        *v /= opts.n_samples as f64;
    }

    if opts.temperature != 1.0 {
        aggregated = temperature_scale(&aggregated, opts.temperature)?;
    }
    normalize_in_place(&mut aggregated);

    let calibration = calibration_weight(&posterior.sigma, opts.alpha);
    let weight = match opts.weight_mode {
        WeightMode::Composite => posterior.confidence * calibration,
        WeightMode::CalibrationOnly => calibration,
    };

    let potential: BTreeMap<String, f64> = domain
        .iter()
        .cloned()
        .zip(aggregated.iter().copied())
        .collect();
    Ok(SoftFactor {
        evidence_id: posterior.evidence_id.clone(),
        variables: vec![predicate.to_string()],
        factor_type: "likelihood".into(),
        potential,
        weight,
        metadata: FactorMetadata {
            n_samples: opts.n_samples,
            temperature: opts.temperature,
            mean_sigma: posterior.mean_sigma(),
            base_confidence: posterior.confidence,
        },
    })
}
