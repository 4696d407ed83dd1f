//! VAE encoder: embedding → hidden MLP → (mu head, log-sigma head).

use super::layers::{FeedForward, Linear, LinearGrad, StackTrace};
use super::{LatentPosterior, SIGMA_MIN};
use crate::error::{LpfError, Result};
use crate::numerics::{DenseVector, RandomStream};

/// Encoder network. Default geometry is 384 → [256, 128] → two 64-dim heads.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderModel {
    embed_dim: usize,
    hidden_dims: Vec<usize>,
    latent_dim: usize,
    hidden: FeedForward,
    mu_head: Linear,
    log_sigma_head: Linear,
    pub dropout: f64,
}

/// Forward-pass activations kept for backprop.
#[derive(Debug, Clone)]
pub struct EncoderTrace {
    pub stack: StackTrace,
    pub mu: Vec<f64>,
    pub log_sigma: Vec<f64>,
    pub sigma: Vec<f64>,
    /// Per-dimension flag: sigma hit the floor, so d(sigma)/d(log_sigma) = 0.
    pub clipped: Vec<bool>,
}

/// Gradient buffers mirroring [`EncoderModel`] parameter order.
#[derive(Debug, Clone)]
pub struct EncoderGrads {
    pub hidden: Vec<LinearGrad>,
    pub mu_head: LinearGrad,
    pub log_sigma_head: LinearGrad,
}

impl EncoderGrads {
    pub fn append_params(&self, out: &mut Vec<f64>) {
        for g in &self.hidden {
            g.append_params(out);
        }
        self.mu_head.append_params(out);
        self.log_sigma_head.append_params(out);
    }

    pub fn scale(&mut self, factor: f64) {
        for g in &mut self.hidden {
            g.scale(factor);
        }
        self.mu_head.scale(factor);
        self.log_sigma_head.scale(factor);
    }
}

impl EncoderModel {
    pub const DEFAULT_EMBED_DIM: usize = 384;
    pub const DEFAULT_HIDDEN: [usize; 2] = [256, 128];
    pub const DEFAULT_LATENT_DIM: usize = 64;

    pub fn new(
        embed_dim: usize,
        hidden_dims: &[usize],
        latent_dim: usize,
        dropout: f64,
        stream: &mut RandomStream,
    ) -> Self {
        let mut dims = vec![embed_dim];
        dims.extend_from_slice(hidden_dims);
        let last_hidden = *dims.last().expect("at least one hidden layer");
        Self {
            embed_dim,
            hidden_dims: hidden_dims.to_vec(),
            latent_dim,
            hidden: FeedForward::init(&dims, stream),
            mu_head: Linear::init(last_hidden, latent_dim, stream),
            log_sigma_head: Linear::init(last_hidden, latent_dim, stream),
            dropout,
        }
    }

    /// Default architecture of the compliance experiments.
    pub fn with_defaults(dropout: f64, stream: &mut RandomStream) -> Self {
        Self::new(
            Self::DEFAULT_EMBED_DIM,
            &Self::DEFAULT_HIDDEN,
            Self::DEFAULT_LATENT_DIM,
            dropout,
            stream,
        )
    }

    /// All-zero network of the same geometry (test fixture).
    pub fn zeros(embed_dim: usize, hidden_dims: &[usize], latent_dim: usize) -> Self {
        let mut dims = vec![embed_dim];
        dims.extend_from_slice(hidden_dims);
        let last_hidden = *dims.last().unwrap();
        Self {
            embed_dim,
            hidden_dims: hidden_dims.to_vec(),
            latent_dim,
            hidden: FeedForward::zeros(&dims),
            mu_head: Linear::zeros(last_hidden, latent_dim),
            log_sigma_head: Linear::zeros(last_hidden, latent_dim),
            dropout: 0.0,
        }
    }

    pub fn embed_dim(&self) -> usize {
        self.embed_dim
    }

    pub fn hidden_dims(&self) -> &[usize] {
        &self.hidden_dims
    }

    pub fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    /// Inference-mode encoding (dropout disabled).
    pub fn encode(&self, embedding: &DenseVector, evidence_id: &str) -> Result<LatentPosterior> {
        if embedding.len() != self.embed_dim {
            return Err(LpfError::Domain(format!(
                "encoder expects {}-dim embeddings, got {}",
                self.embed_dim,
                embedding.len()
            )));
        }
        let trace = self.forward(embedding.as_slice(), None);
        LatentPosterior::new(
            evidence_id,
            DenseVector::new(trace.mu).expect("finite mu"),
            DenseVector::new(trace.sigma).expect("finite sigma"),
        )
    }

    /// Full forward pass retaining activations. Training passes a dropout
    /// stream; inference passes `None`.
    pub fn forward(&self, embedding: &[f64], dropout: Option<&mut RandomStream>) -> EncoderTrace {
        let stack = self
            .hidden
            .forward(embedding, dropout.map(|s| (self.dropout, s)));
        let mu = self.mu_head.forward(&stack.output);
        let log_sigma = self.log_sigma_head.forward(&stack.output);
        let mut sigma = Vec::with_capacity(log_sigma.len());
        let mut clipped = Vec::with_capacity(log_sigma.len());
        for ls in &log_sigma {
            let s = ls.exp();
            if s < SIGMA_MIN {
                sigma.push(SIGMA_MIN);
                clipped.push(true);
            } else {
                sigma.push(s);
                clipped.push(false);
            }
        }
        EncoderTrace { stack, mu, log_sigma, sigma, clipped }
    }

    /// Backward pass given gradients w.r.t. mu and sigma.
    ///
    /// `d_sigma` flows through `sigma = exp(log_sigma)` (zero where clipped);
    /// both head gradients then flow back through the shared hidden stack.
    pub fn backward(
        &self,
        embedding: &[f64],
        trace: &EncoderTrace,
        d_mu: &[f64],
        d_sigma: &[f64],
        grads: &mut EncoderGrads,
    ) {
        let d_log_sigma: Vec<f64> = d_sigma
            .iter()
            .zip(&trace.sigma)
            .zip(&trace.clipped)
            .map(|((d, s), &c)| if c { 0.0 } else { d * s })
            .collect();
        let mut d_hidden = self
            .mu_head
            .backward(&trace.stack.output, d_mu, &mut grads.mu_head);
        let d_hidden_sigma = self.log_sigma_head.backward(
            &trace.stack.output,
            &d_log_sigma,
            &mut grads.log_sigma_head,
        );
        for (a, b) in d_hidden.iter_mut().zip(&d_hidden_sigma) {
            *a += b;
        }
        let _ = self
            .hidden
            .backward(&trace.stack, &d_hidden, &mut grads.hidden);
        let _ = embedding;
    }

    pub fn grads_like(&self) -> EncoderGrads {
        EncoderGrads {
            hidden: self.hidden.grads_like(),
            mu_head: LinearGrad::zeros_like(&self.mu_head),
            log_sigma_head: LinearGrad::zeros_like(&self.log_sigma_head),
        }
    }

    pub fn param_count(&self) -> usize {
        self.hidden.param_count() + self.mu_head.param_count() + self.log_sigma_head.param_count()
    }

    pub fn flatten_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for layer in &self.hidden.layers {
            layer.append_params(&mut out);
        }
        self.mu_head.append_params(&mut out);
        self.log_sigma_head.append_params(&mut out);
        out
    }

    pub fn load_params(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(LpfError::ShapeMismatch(format!(
                "encoder expects {} params, got {}",
                self.param_count(),
                flat.len()
            )));
        }
        let mut pos = 0;
        for layer in &mut self.hidden.layers {
            layer.read_params(flat, &mut pos)?;
        }
        self.mu_head.read_params(flat, &mut pos)?;
        self.log_sigma_head.read_params(flat, &mut pos)?;
        Ok(())
    }
}
