//! Conditional decoder: (latent code, predicate embedding) → distribution
//! over the predicate's domain, one output head per predicate.

use std::collections::BTreeMap;

use super::layers::{FeedForward, Linear, LinearGrad, StackTrace};
use crate::error::{LpfError, Result};
use crate::numerics::{softmax, DenseMatrix, RandomStream};

/// A predicate name with its categorical domain.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct PredicateSpec {
    pub name: String,
    pub domain: Vec<String>,
}

impl PredicateSpec {
    pub fn new(name: impl Into<String>, domain: &[&str]) -> Self {
        Self {
            name: name.into(),
            domain: domain.iter().map(|s| s.to_string()).collect(),
        }
    }
}

/// Decoder network. Default geometry: [64 latent + 32 predicate] → [128, 64]
/// trunk → per-predicate head of that predicate's domain size.
#[derive(Debug, Clone, PartialEq)]
pub struct DecoderModel {
    latent_dim: usize,
    predicate_embed_dim: usize,
    hidden_dims: Vec<usize>,
    predicates: Vec<PredicateSpec>,
    index: BTreeMap<String, usize>,
    /// One learned row per predicate.
    predicate_embeddings: DenseMatrix,
    trunk: FeedForward,
    heads: Vec<Linear>,
    pub dropout: f64,
}

/// Forward activations for backprop.
#[derive(Debug, Clone)]
pub struct DecoderTrace {
    pub predicate_idx: usize,
    pub joint_input: Vec<f64>,
    pub stack: StackTrace,
    pub logits: Vec<f64>,
    pub probs: Vec<f64>,
}

/// Gradient buffers in [`DecoderModel`] parameter order.
#[derive(Debug, Clone)]
pub struct DecoderGrads {
    pub predicate_embeddings: DenseMatrix,
    pub trunk: Vec<LinearGrad>,
    pub heads: Vec<LinearGrad>,
}

impl DecoderGrads {
    pub fn append_params(&self, out: &mut Vec<f64>) {
        out.extend_from_slice(self.predicate_embeddings.as_slice());
        for g in &self.trunk {
            g.append_params(out);
        }
        for g in &self.heads {
            g.append_params(out);
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for v in self.predicate_embeddings.as_mut_slice() {
            *v *= factor;
        }
        for g in &mut self.trunk {
            g.scale(factor);
        }
        for g in &mut self.heads {
            g.scale(factor);
        }
    }
}

impl DecoderModel {
    pub const DEFAULT_LATENT_DIM: usize = 64;
    pub const DEFAULT_PREDICATE_EMBED_DIM: usize = 32;
    pub const DEFAULT_HIDDEN: [usize; 2] = [128, 64];

    pub fn new(
        latent_dim: usize,
        predicate_embed_dim: usize,
        hidden_dims: &[usize],
        predicates: Vec<PredicateSpec>,
        dropout: f64,
        stream: &mut RandomStream,
    ) -> Self {
        let mut dims = vec![latent_dim + predicate_embed_dim];
        dims.extend_from_slice(hidden_dims);
        let last_hidden = *dims.last().unwrap();
        let scale = (1.0 / predicate_embed_dim as f64).sqrt();
        let emb_values: Vec<f64> = (0..predicates.len() * predicate_embed_dim)
            .map(|_| stream.next_gaussian() * scale)
            .collect();
        let heads = predicates
            .iter()
            .map(|p| Linear::init(last_hidden, p.domain.len(), stream))
            .collect();
        let index = predicates
            .iter()
            .enumerate()
            .map(|(i, p)| (p.name.clone(), i))
            .collect();
        Self {
            latent_dim,
            predicate_embed_dim,
            hidden_dims: hidden_dims.to_vec(),
            predicate_embeddings: DenseMatrix::new(
                predicates.len(),
                predicate_embed_dim,
                emb_values,
            )
            .expect("finite init"),
            trunk: FeedForward::init(&dims, stream),
            heads,
            index,
            predicates,
            dropout,
        }
    }

    pub fn with_defaults(
        predicates: Vec<PredicateSpec>,
        dropout: f64,
        stream: &mut RandomStream,
    ) -> Self {
        Self::new(
            Self::DEFAULT_LATENT_DIM,
            Self::DEFAULT_PREDICATE_EMBED_DIM,
            &Self::DEFAULT_HIDDEN,
            predicates,
            dropout,
            stream,
        )
    }

    /// All-zero network of the same geometry (test fixture).
    pub fn zeros(
        latent_dim: usize,
        predicate_embed_dim: usize,
        hidden_dims: &[usize],
        predicates: Vec<PredicateSpec>,
    ) -> Self {
        let mut dims = vec![latent_dim + predicate_embed_dim];
        dims.extend_from_slice(hidden_dims);
        let last_hidden = *dims.last().unwrap();
        let heads = predicates
            .iter()
            .map(|p| Linear::zeros(last_hidden, p.domain.len()))
            .collect();
        let index = predicates
            .iter()
            .enumerate()
            .map(|(i, p)| (p.name.clone(), i))
            .collect();
        Self {
            latent_dim,
            predicate_embed_dim,
            hidden_dims: hidden_dims.to_vec(),
            predicate_embeddings: DenseMatrix::zeros(predicates.len(), predicate_embed_dim),
            trunk: FeedForward::zeros(&dims),
            heads,
            index,
            predicates,
            dropout: 0.0,
        }
    }

    pub fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    pub fn predicate_embed_dim(&self) -> usize {
        self.predicate_embed_dim
    }

    pub fn hidden_dims(&self) -> &[usize] {
        &self.hidden_dims
    }

    pub fn predicates(&self) -> &[PredicateSpec] {
        &self.predicates
    }

    pub fn predicate_index(&self, name: &str) -> Result<usize> {
        self.index
            .get(name)
            .copied()
            .ok_or_else(|| LpfError::UnknownPredicate(name.to_string()))
    }

    pub fn domain(&self, predicate: &str) -> Result<&[String]> {
        let idx = self.predicate_index(predicate)?;
        Ok(&self.predicates[idx].domain)
    }

    /// Mutable access to a head layer (test fixtures build hand-set heads).
    pub fn head_mut(&mut self, predicate: &str) -> Result<&mut Linear> {
        let idx = self.predicate_index(predicate)?;
        Ok(&mut self.heads[idx])
    }

    /// Mutable access to a trunk layer (test fixtures wire identity trunks).
    pub fn trunk_layer_mut(&mut self, layer: usize) -> &mut Linear {
        &mut self.trunk.layers[layer]
    }

    /// Inference-mode decoding of a latent code into a normalized
    /// distribution over the predicate's domain.
    pub fn decode(&self, z: &[f64], predicate: &str) -> Result<Vec<f64>> {
        let trace = self.forward(z, predicate, None)?;
        Ok(trace.probs)
    }

    /// Forward pass retaining activations; dropout active only when a stream
    /// is supplied.
    pub fn forward(
        &self,
        z: &[f64],
        predicate: &str,
        dropout: Option<&mut RandomStream>,
    ) -> Result<DecoderTrace> {
        if z.len() != self.latent_dim {
            return Err(LpfError::Domain(format!(
                "decoder expects {}-dim latent codes, got {}",
                self.latent_dim,
                z.len()
            )));
        }
        let predicate_idx = self.predicate_index(predicate)?;
        let mut joint_input = Vec::with_capacity(self.latent_dim + self.predicate_embed_dim);
        joint_input.extend_from_slice(z);
        joint_input.extend_from_slice(self.predicate_embeddings.row(predicate_idx));
        let stack = self
            .trunk
            .forward(&joint_input, dropout.map(|s| (self.dropout, s)));
        let logits = self.heads[predicate_idx].forward(&stack.output);
        let probs = softmax(&logits)?;
        Ok(DecoderTrace { predicate_idx, joint_input, stack, logits, probs })
    }

    /// Backward pass given d(loss)/d(logits). Accumulates parameter
    /// gradients and returns d(loss)/d(z).
    pub fn backward(
        &self,
        trace: &DecoderTrace,
        d_logits: &[f64],
        grads: &mut DecoderGrads,
    ) -> Vec<f64> {
        let d_hidden = self.heads[trace.predicate_idx].backward(
            &trace.stack.output,
            d_logits,
            &mut grads.heads[trace.predicate_idx],
        );
        let d_joint = self.trunk.backward(&trace.stack, &d_hidden, &mut grads.trunk);
        let (d_z, d_emb) = d_joint.split_at(self.latent_dim);
        let row_start = trace.predicate_idx * self.predicate_embed_dim;
        let emb_grad = &mut grads.predicate_embeddings.as_mut_slice()
            [row_start..row_start + self.predicate_embed_dim];
        for (g, d) in emb_grad.iter_mut().zip(d_emb) {
            *g += d;
        }
        d_z.to_vec()
    }

    pub fn grads_like(&self) -> DecoderGrads {
        DecoderGrads {
            predicate_embeddings: DenseMatrix::zeros(
                self.predicates.len(),
                self.predicate_embed_dim,
            ),
            trunk: self.trunk.grads_like(),
            heads: self.heads.iter().map(LinearGrad::zeros_like).collect(),
        }
    }

    pub fn param_count(&self) -> usize {
        self.predicate_embeddings.as_slice().len()
            + self.trunk.param_count()
            + self.heads.iter().map(Linear::param_count).sum::<usize>()
    }

    pub fn flatten_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        out.extend_from_slice(self.predicate_embeddings.as_slice());
        for layer in &self.trunk.layers {
            layer.append_params(&mut out);
        }
        for head in &self.heads {
            head.append_params(&mut out);
        }
        out
    }

    pub fn load_params(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(LpfError::ShapeMismatch(format!(
                "decoder expects {} params, got {}",
                self.param_count(),
                flat.len()
            )));
        }
        let emb_len = self.predicate_embeddings.as_slice().len();
        self.predicate_embeddings
            .as_mut_slice()
            .copy_from_slice(&flat[..emb_len]);
        let mut pos = emb_len;
        for layer in &mut self.trunk.layers {
            layer.read_params(flat, &mut pos)?;
        }
        for head in &mut self.heads {
            head.read_params(flat, &mut pos)?;
        }
        Ok(())
    }
}
