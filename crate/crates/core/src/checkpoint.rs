//! Model persistence: a self-describing JSON container holding architecture
//! dimensions, the predicate vocabulary, all parameter tensors as 64-bit
//! floats, and the training seed. Loading rebuilds the models and validates
//! dimension consistency via the parameter counts.

use std::path::Path;

use crate::error::{LpfError, Result};
use crate::nets::{AggregatorModel, DecoderModel, EncoderModel, PredicateSpec};
use crate::numerics::RandomStream;

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct EncoderSpec {
    pub embed_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub latent_dim: usize,
    pub dropout: f64,
    pub params: Vec<f64>,
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct DecoderSpec {
    pub latent_dim: usize,
    pub predicate_embed_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub predicates: Vec<PredicateSpec>,
    pub dropout: f64,
    pub params: Vec<f64>,
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct AggregatorSpec {
    pub latent_dim: usize,
    pub quality_hidden: Vec<usize>,
    pub consistency_hidden: Vec<usize>,
    pub weight_hidden: Vec<usize>,
    pub dropout: f64,
    pub params: Vec<f64>,
}

/// On-disk model bundle.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct ModelCheckpoint {
    pub format_version: u32,
    pub seed: u64,
    pub encoder: EncoderSpec,
    pub decoder: DecoderSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aggregator: Option<AggregatorSpec>,
}

impl ModelCheckpoint {
    pub fn from_models(
        seed: u64,
        encoder: &EncoderModel,
        decoder: &DecoderModel,
        aggregator: Option<&AggregatorModel>,
    ) -> Self {
        Self {
            format_version: CHECKPOINT_FORMAT_VERSION,
            seed,
            encoder: EncoderSpec {
                embed_dim: encoder.embed_dim(),
                hidden_dims: encoder.hidden_dims().to_vec(),
                latent_dim: encoder.latent_dim(),
                dropout: encoder.dropout,
                params: encoder.flatten_params(),
            },
            decoder: DecoderSpec {
                latent_dim: decoder.latent_dim(),
                predicate_embed_dim: decoder.predicate_embed_dim(),
                hidden_dims: decoder.hidden_dims().to_vec(),
                predicates: decoder.predicates().to_vec(),
                dropout: decoder.dropout,
                params: decoder.flatten_params(),
            },
            aggregator: aggregator.map(|a| {
                let (q, c, w) = a.hidden_dims();
                AggregatorSpec {
                    latent_dim: a.latent_dim(),
                    quality_hidden: q.to_vec(),
                    consistency_hidden: c.to_vec(),
                    weight_hidden: w.to_vec(),
                    dropout: a.dropout,
                    params: a.flatten_params(),
                }
            }),
        }
    }

    /// Rebuilds the models; parameter-count mismatches are load errors.
    pub fn into_models(
        self,
    ) -> Result<(EncoderModel, DecoderModel, Option<AggregatorModel>)> {
        if self.format_version != CHECKPOINT_FORMAT_VERSION {
            return Err(LpfError::Domain(format!(
                "unsupported checkpoint format {}",
                self.format_version
            )));
        }
        // The throwaway stream only fills buffers that load_params
        // immediately overwrites.
        let mut scratch = RandomStream::new(0, 0);
        let mut encoder = EncoderModel::new(
            self.encoder.embed_dim,
            &self.encoder.hidden_dims,
            self.encoder.latent_dim,
            self.encoder.dropout,
            &mut scratch,
        );
        encoder.load_params(&self.encoder.params)?;
        let mut decoder = DecoderModel::new(
            self.decoder.latent_dim,
            self.decoder.predicate_embed_dim,
            &self.decoder.hidden_dims,
            self.decoder.predicates.clone(),
            self.decoder.dropout,
            &mut scratch,
        );
        decoder.load_params(&self.decoder.params)?;
        if encoder.latent_dim() != decoder.latent_dim() {
            return Err(LpfError::ShapeMismatch(format!(
                "encoder latent dim {} != decoder latent dim {}",
                encoder.latent_dim(),
                decoder.latent_dim()
            )));
        }
        let aggregator = match self.aggregator {
            Some(spec) => {
                let mut model = AggregatorModel::new(
                    spec.latent_dim,
                    &spec.quality_hidden,
                    &spec.consistency_hidden,
                    &spec.weight_hidden,
                    spec.dropout,
                    &mut scratch,
                );
                model.load_params(&spec.params)?;
                if model.latent_dim() != encoder.latent_dim() {
                    return Err(LpfError::ShapeMismatch(
                        "aggregator latent dim disagrees with encoder".into(),
                    ));
                }
                Some(model)
            }
            None => None,
        };
        Ok((encoder, decoder, aggregator))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string(self)?;
        std::fs::write(path, json)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let json = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&json)?)
    }
}
