//! Learned latent-space aggregator: quality net, pairwise consistency net,
//! and weight net, combined into a convex mixture of posterior means.

use super::layers::{sigmoid, softplus, FeedForward, Linear, LinearGrad, StackTrace};
use super::LatentPosterior;
use crate::error::{LpfError, Result};
use crate::numerics::{softmax, DenseMatrix, DenseVector, RandomStream};

/// Hidden stack plus a scalar output layer; activation is applied by the
/// caller (sigmoid for quality/consistency, softplus for weights).
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreNet {
    pub stack: FeedForward,
    pub out: Linear,
}

#[derive(Debug, Clone)]
pub struct ScoreTrace {
    pub input: Vec<f64>,
    pub stack: StackTrace,
    pub pre_activation: f64,
}

#[derive(Debug, Clone)]
pub struct ScoreGrads {
    pub stack: Vec<LinearGrad>,
    pub out: LinearGrad,
}

impl ScoreNet {
    fn zeros(dims: &[usize]) -> Self {
        let last = *dims.last().unwrap();
        Self {
            stack: FeedForward::zeros(dims),
            out: Linear::zeros(last, 1),
        }
    }

    fn init(dims: &[usize], stream: &mut RandomStream) -> Self {
        let last = *dims.last().unwrap();
        Self {
            stack: FeedForward::init(dims, stream),
            out: Linear::init(last, 1, stream),
        }
    }

    fn forward(&self, x: &[f64], dropout: Option<(f64, &mut RandomStream)>) -> ScoreTrace {
        let stack = self.stack.forward(x, dropout);
        let pre_activation = self.out.forward(&stack.output)[0];
        ScoreTrace { input: x.to_vec(), stack, pre_activation }
    }

    fn backward(&self, trace: &ScoreTrace, d_pre: f64, grads: &mut ScoreGrads) -> Vec<f64> {
        let d_hidden = self
            .out
            .backward(&trace.stack.output, &[d_pre], &mut grads.out);
        self.stack.backward(&trace.stack, &d_hidden, &mut grads.stack)
    }

    fn grads_like(&self) -> ScoreGrads {
        ScoreGrads {
            stack: self.stack.grads_like(),
            out: LinearGrad::zeros_like(&self.out),
        }
    }

    fn param_count(&self) -> usize {
        self.stack.param_count() + self.out.param_count()
    }

    fn append_params(&self, out: &mut Vec<f64>) {
        for layer in &self.stack.layers {
            layer.append_params(out);
        }
        self.out.append_params(out);
    }

    fn read_params(&mut self, src: &[f64], pos: &mut usize) -> Result<()> {
        for layer in &mut self.stack.layers {
            layer.read_params(src, pos)?;
        }
        self.out.read_params(src, pos)
    }
}

/// The three aggregation networks.
///
/// Quality takes `[mu, log sigma, mean(sigma)]` (2d+1 dims, sigmoid output);
/// consistency takes `[|mu_i − mu_j|, |logvar_i − logvar_j|]` (2d dims,
/// sigmoid output, symmetric by construction); the weight net takes
/// `[quality, avg consistency]` (softplus output, softmax-normalized).
#[derive(Debug, Clone, PartialEq)]
pub struct AggregatorModel {
    latent_dim: usize,
    quality_hidden: Vec<usize>,
    consistency_hidden: Vec<usize>,
    weight_hidden: Vec<usize>,
    quality: ScoreNet,
    consistency: ScoreNet,
    weight: ScoreNet,
    pub dropout: f64,
}

/// Output of latent aggregation with full diagnostics.
#[derive(Debug, Clone)]
pub struct AggregateResult {
    pub z_agg: DenseVector,
    /// Simplex weights, one per posterior.
    pub weights: Vec<f64>,
    pub quality: Vec<f64>,
    pub consistency: DenseMatrix,
    pub avg_consistency: Vec<f64>,
    /// Weighted log-variance, recorded for diagnostics only; decoding uses
    /// `z_agg` alone.
    pub log_var_agg: Vec<f64>,
}

/// Forward activations for aggregator training.
#[derive(Debug, Clone)]
pub struct AggregateTrace {
    pub quality_traces: Vec<ScoreTrace>,
    pub quality_scores: Vec<f64>,
    /// Unordered pairs (i < j) with their net traces.
    pub pair_traces: Vec<(usize, usize, ScoreTrace)>,
    pub consistency: DenseMatrix,
    pub avg_consistency: Vec<f64>,
    pub weight_traces: Vec<ScoreTrace>,
    pub raw_weights: Vec<f64>,
    pub weights: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct AggregatorGrads {
    pub quality: ScoreGrads,
    pub consistency: ScoreGrads,
    pub weight: ScoreGrads,
}

impl AggregatorGrads {
    pub fn append_params(&self, out: &mut Vec<f64>) {
        self.quality.stack.iter().for_each(|g| g.append_params(out));
        self.quality.out.append_params(out);
        self.consistency.stack.iter().for_each(|g| g.append_params(out));
        self.consistency.out.append_params(out);
        self.weight.stack.iter().for_each(|g| g.append_params(out));
        self.weight.out.append_params(out);
    }

    pub fn scale(&mut self, factor: f64) {
        for grads in [&mut self.quality, &mut self.consistency, &mut self.weight] {
            for g in &mut grads.stack {
                g.scale(factor);
            }
            grads.out.scale(factor);
        }
    }
}

impl AggregatorModel {
    pub const DEFAULT_QUALITY_HIDDEN: [usize; 2] = [64, 32];
    pub const DEFAULT_CONSISTENCY_HIDDEN: [usize; 2] = [64, 32];
    pub const DEFAULT_WEIGHT_HIDDEN: [usize; 1] = [32];

    pub fn new(
        latent_dim: usize,
        quality_hidden: &[usize],
        consistency_hidden: &[usize],
        weight_hidden: &[usize],
        dropout: f64,
        stream: &mut RandomStream,
    ) -> Self {
        let mut q_dims = vec![2 * latent_dim + 1];
        q_dims.extend_from_slice(quality_hidden);
        let mut c_dims = vec![2 * latent_dim];
        c_dims.extend_from_slice(consistency_hidden);
        let mut w_dims = vec![2];
        w_dims.extend_from_slice(weight_hidden);
        Self {
            latent_dim,
            quality_hidden: quality_hidden.to_vec(),
            consistency_hidden: consistency_hidden.to_vec(),
            weight_hidden: weight_hidden.to_vec(),
            quality: ScoreNet::init(&q_dims, stream),
            consistency: ScoreNet::init(&c_dims, stream),
            weight: ScoreNet::init(&w_dims, stream),
            dropout,
        }
    }

    pub fn with_defaults(latent_dim: usize, dropout: f64, stream: &mut RandomStream) -> Self {
        Self::new(
            latent_dim,
            &Self::DEFAULT_QUALITY_HIDDEN,
            &Self::DEFAULT_CONSISTENCY_HIDDEN,
            &Self::DEFAULT_WEIGHT_HIDDEN,
            dropout,
            stream,
        )
    }

    /// All-zero networks of the same geometry (test fixture).
    pub fn zeros(latent_dim: usize) -> Self {
        let q_dims = [2 * latent_dim + 1, 64, 32];
        let c_dims = [2 * latent_dim, 64, 32];
        let w_dims = [2, 32];
        Self {
            latent_dim,
            quality_hidden: vec![64, 32],
            consistency_hidden: vec![64, 32],
            weight_hidden: vec![32],
            quality: ScoreNet::zeros(&q_dims),
            consistency: ScoreNet::zeros(&c_dims),
            weight: ScoreNet::zeros(&w_dims),
            dropout: 0.0,
        }
    }

    pub fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    pub fn hidden_dims(&self) -> (&[usize], &[usize], &[usize]) {
        (&self.quality_hidden, &self.consistency_hidden, &self.weight_hidden)
    }

    /// Mutable access to each net's output layer for test fixtures.
    pub fn quality_out_mut(&mut self) -> &mut Linear {
        &mut self.quality.out
    }

    pub fn consistency_out_mut(&mut self) -> &mut Linear {
        &mut self.consistency.out
    }

    pub fn weight_out_mut(&mut self) -> &mut Linear {
        &mut self.weight.out
    }

    fn quality_features(&self, p: &LatentPosterior) -> Vec<f64> {
        let mut f = Vec::with_capacity(2 * self.latent_dim + 1);
        f.extend_from_slice(p.mu.as_slice());
        f.extend(p.log_sigma());
        f.push(p.mean_sigma());
        f
    }

    fn consistency_features(&self, a: &LatentPosterior, b: &LatentPosterior) -> Vec<f64> {
        let mut f = Vec::with_capacity(2 * self.latent_dim);
        for (x, y) in a.mu.iter().zip(b.mu.iter()) {
            f.push((x - y).abs());
        }
        for (x, y) in a.log_var().iter().zip(b.log_var().iter()) {
            f.push((x - y).abs());
        }
        f
    }

    /// Quality score in [0, 1] (inference mode).
    pub fn quality_score(&self, posterior: &LatentPosterior) -> f64 {
        let features = self.quality_features(posterior);
        sigmoid(self.quality.forward(&features, None).pre_activation)
    }

    /// Pairwise consistency in [0, 1]; exactly symmetric in its arguments.
    pub fn consistency_score(&self, a: &LatentPosterior, b: &LatentPosterior) -> f64 {
        let features = self.consistency_features(a, b);
        sigmoid(self.consistency.forward(&features, None).pre_activation)
    }

    /// Aggregates posteriors into a single latent code (inference mode).
    pub fn aggregate_latent(&self, posteriors: &[LatentPosterior]) -> Result<AggregateResult> {
        let (result, _) = self.aggregate_with_trace(posteriors, None)?;
        Ok(result)
    }

    /// Aggregation with retained activations; training passes a dropout
    /// stream, inference passes `None`.
    pub fn aggregate_with_trace(
        &self,
        posteriors: &[LatentPosterior],
        mut dropout: Option<&mut RandomStream>,
    ) -> Result<(AggregateResult, AggregateTrace)> {
        let n = posteriors.len();
        if n == 0 {
            return Err(LpfError::NoEvidence);
        }
        let d = self.latent_dim;
        for p in posteriors {
            if p.latent_dim() != d {
                return Err(LpfError::ShapeMismatch(format!(
                    "aggregator expects {d}-dim posteriors, got {}",
                    p.latent_dim()
                )));
            }
        }

        let mut quality_traces = Vec::with_capacity(n);
        let mut quality_scores = Vec::with_capacity(n);
        for p in posteriors {
            let features = self.quality_features(p);
            let trace = self
                .quality
                .forward(&features, dropout.as_deref_mut().map(|s| (self.dropout, s)));
            quality_scores.push(sigmoid(trace.pre_activation));
            quality_traces.push(trace);
        }

        // Self-consistency is fixed at 1; off-diagonal entries come from the
        // net once per unordered pair (the |.| features make C symmetric).
        let mut consistency = DenseMatrix::zeros(n, n);
        for i in 0..n {
            consistency.set(i, i, 1.0);
        }
        let mut pair_traces = Vec::with_capacity(n.saturating_sub(1) * n / 2);
        for i in 0..n {
            for j in (i + 1)..n {
                let features = self.consistency_features(&posteriors[i], &posteriors[j]);
                let trace = self
                    .consistency
                    .forward(&features, dropout.as_deref_mut().map(|s| (self.dropout, s)));
                let c = sigmoid(trace.pre_activation);
                consistency.set(i, j, c);
                consistency.set(j, i, c);
                pair_traces.push((i, j, trace));
            }
        }

        let avg_consistency: Vec<f64> = (0..n)
            .map(|i| {
                if n == 1 {
                    1.0
                } else {
                    (0..n)
                        .filter(|&j| j != i)
                        .map(|j| consistency.get(i, j))
                        .sum::<f64>()
                        / (n - 1) as f64
                }
            })
            .collect();

        let mut weight_traces = Vec::with_capacity(n);
        let mut raw_weights = Vec::with_capacity(n);
        for i in 0..n {
            let features = vec![quality_scores[i], avg_consistency[i]];
            let trace = self
                .weight
                .forward(&features, dropout.as_deref_mut().map(|s| (self.dropout, s)));
            raw_weights.push(softplus(trace.pre_activation));
            weight_traces.push(trace);
        }
        let weights = softmax(&raw_weights)?;

        let mut z_agg = vec![0.0; d];
        let mut log_var_agg = vec![0.0; d];
        for (i, p) in posteriors.iter().enumerate() {
            let w = weights[i];
            for (acc, m) in z_agg.iter_mut().zip(p.mu.iter()) {
                *acc += w * m;
            }
            for (acc, lv) in log_var_agg.iter_mut().zip(p.log_var()) {
                *acc += w * lv;
            }
        }

        let result = AggregateResult {
            z_agg: DenseVector::new(z_agg).expect("finite aggregate"),
            weights: weights.clone(),
            quality: quality_scores.clone(),
            consistency: consistency.clone(),
            avg_consistency: avg_consistency.clone(),
            log_var_agg,
        };
        let trace = AggregateTrace {
            quality_traces,
            quality_scores,
            pair_traces,
            consistency,
            avg_consistency,
            weight_traces,
            raw_weights,
            weights,
        };
        Ok((result, trace))
    }

    /// Backward pass from d(loss)/d(z_agg) into the three nets' gradients.
    /// Posterior parameters are inputs, not trainables, so nothing flows
    /// past them.
    #[allow(clippy::needless_range_loop)]
    pub fn backward(
        &self,
        posteriors: &[LatentPosterior],
        trace: &AggregateTrace,
        d_z_agg: &[f64],
        grads: &mut AggregatorGrads,
    ) {
        let n = posteriors.len();
        // z_agg = Σ w_i mu_i ⇒ dw_i = d_z . mu_i
        let d_weights: Vec<f64> = posteriors
            .iter()
            .map(|p| p.mu.iter().zip(d_z_agg).map(|(m, d)| m * d).sum())
            .collect();
        // Softmax backward.
        let dot: f64 = d_weights
            .iter()
            .zip(&trace.weights)
            .map(|(d, w)| d * w)
            .sum();
        let d_raw: Vec<f64> = trace
            .weights
            .iter()
            .zip(&d_weights)
            .map(|(w, d)| w * (d - dot))
            .collect();

        let mut d_quality = vec![0.0; n];
        let mut d_avg_consistency = vec![0.0; n];
        for i in 0..n {
            // Softplus backward: d(softplus(x))/dx = sigmoid(x).
            let d_pre = d_raw[i] * sigmoid(trace.weight_traces[i].pre_activation);
            let d_in = self
                .weight
                .backward(&trace.weight_traces[i], d_pre, &mut grads.weight);
            d_quality[i] += d_in[0];
            d_avg_consistency[i] += d_in[1];
        }

        for i in 0..n {
            let q = trace.quality_scores[i];
            let d_pre = d_quality[i] * q * (1.0 - q);
            self.quality
                .backward(&trace.quality_traces[i], d_pre, &mut grads.quality);
        }

        if n > 1 {
            let denom = (n - 1) as f64;
            for (i, j, pair_trace) in &trace.pair_traces {
                let c = trace.consistency.get(*i, *j);
                let d_c = d_avg_consistency[*i] / denom + d_avg_consistency[*j] / denom;
                let d_pre = d_c * c * (1.0 - c);
                self.consistency
                    .backward(pair_trace, d_pre, &mut grads.consistency);
            }
        }
    }

    pub fn grads_like(&self) -> AggregatorGrads {
        AggregatorGrads {
            quality: self.quality.grads_like(),
            consistency: self.consistency.grads_like(),
            weight: self.weight.grads_like(),
        }
    }

    pub fn param_count(&self) -> usize {
        self.quality.param_count() + self.consistency.param_count() + self.weight.param_count()
    }

    pub fn flatten_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        self.quality.append_params(&mut out);
        self.consistency.append_params(&mut out);
        self.weight.append_params(&mut out);
        out
    }

    pub fn load_params(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(LpfError::ShapeMismatch(format!(
                "aggregator expects {} params, got {}",
                self.param_count(),
                flat.len()
            )));
        }
        let mut pos = 0;
        self.quality.read_params(flat, &mut pos)?;
        self.consistency.read_params(flat, &mut pos)?;
        self.weight.read_params(flat, &mut pos)?;
        Ok(())
    }
}
