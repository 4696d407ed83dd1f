//! Layer primitives shared by the three network families: linear layers,
//! ReLU stacks with inverted dropout, and their hand-derived backward passes.
//!
//! There is no generic autodiff here. Each network composes these pieces in a
//! fixed order and its backward pass mirrors that order by hand.

use crate::error::{LpfError, Result};
use crate::numerics::{DenseMatrix, RandomStream};

/// Fully connected layer `y = Wx + b` with `W` stored row-major (out x in).
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub weight: DenseMatrix,
    pub bias: Vec<f64>,
}

impl Linear {
    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Self {
            weight: DenseMatrix::zeros(out_dim, in_dim),
            bias: vec![0.0; out_dim],
        }
    }

    /// Gaussian init scaled by 1/sqrt(in_dim); biases start at zero.
    pub fn init(in_dim: usize, out_dim: usize, stream: &mut RandomStream) -> Self {
        let scale = (1.0 / in_dim as f64).sqrt();
        let mut values = Vec::with_capacity(in_dim * out_dim);
        for _ in 0..in_dim * out_dim {
            values.push(stream.next_gaussian() * scale);
        }
        Self {
            weight: DenseMatrix::new(out_dim, in_dim, values).expect("finite init"),
            bias: vec![0.0; out_dim],
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.rows()
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let mut y = self.weight.matvec(x);
        for (o, b) in y.iter_mut().zip(&self.bias) {
            *o += b;
        }
        y
    }

    /// Accumulates `dW += dy xᵀ`, `db += dy` and returns `dx = Wᵀ dy`.
    pub fn backward(&self, x: &[f64], dy: &[f64], grad: &mut LinearGrad) -> Vec<f64> {
        let cols = self.weight.cols();
        for (r, dyr) in dy.iter().enumerate() {
            grad.bias[r] += dyr;
            let row = &mut grad.weight.as_mut_slice()[r * cols..(r + 1) * cols];
            for (g, xv) in row.iter_mut().zip(x) {
                *g += dyr * xv;
            }
        }
        self.weight.matvec_transposed(dy)
    }

    pub fn param_count(&self) -> usize {
        self.weight.as_slice().len() + self.bias.len()
    }

    pub fn append_params(&self, out: &mut Vec<f64>) {
        out.extend_from_slice(self.weight.as_slice());
        out.extend_from_slice(&self.bias);
    }

    pub fn read_params(&mut self, src: &[f64], pos: &mut usize) -> Result<()> {
        let need = self.param_count();
        if *pos + need > src.len() {
            return Err(LpfError::ShapeMismatch(
                "parameter buffer too short for linear layer".into(),
            ));
        }
        let w_len = self.weight.as_slice().len();
        self.weight
            .as_mut_slice()
            .copy_from_slice(&src[*pos..*pos + w_len]);
        *pos += w_len;
        let b_len = self.bias.len();
        self.bias.copy_from_slice(&src[*pos..*pos + b_len]);
        *pos += b_len;
        Ok(())
    }
}

/// Gradient accumulator mirroring a [`Linear`].
#[derive(Debug, Clone)]
pub struct LinearGrad {
    pub weight: DenseMatrix,
    pub bias: Vec<f64>,
}

impl LinearGrad {
    pub fn zeros_like(layer: &Linear) -> Self {
        Self {
            weight: DenseMatrix::zeros(layer.out_dim(), layer.in_dim()),
            bias: vec![0.0; layer.out_dim()],
        }
    }

    pub fn append_params(&self, out: &mut Vec<f64>) {
        out.extend_from_slice(self.weight.as_slice());
        out.extend_from_slice(&self.bias);
    }

    pub fn scale(&mut self, factor: f64) {
        for v in self.weight.as_mut_slice() {
            *v *= factor;
        }
        for v in &mut self.bias {
            *v *= factor;
        }
    }
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// ln(1 + eˣ), evaluated without overflow for large |x|.
pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

/// Stack of Linear→ReLU→dropout blocks; the workhorse of every network here.
#[derive(Debug, Clone, PartialEq)]
pub struct FeedForward {
    pub layers: Vec<Linear>,
}

/// Intermediate activations retained for the backward pass.
#[derive(Debug, Clone)]
pub struct StackTrace {
    /// Input to each linear layer (after the previous block's dropout).
    pub layer_inputs: Vec<Vec<f64>>,
    /// Post-ReLU activations per layer (before dropout).
    pub post_relu: Vec<Vec<f64>>,
    /// Per-layer dropout scale factors (0.0 for dropped units), when training.
    pub masks: Option<Vec<Vec<f64>>>,
    /// Final block output (after ReLU and dropout of the last layer).
    pub output: Vec<f64>,
}

impl FeedForward {
    pub fn zeros(dims: &[usize]) -> Self {
        let layers = dims
            .windows(2)
            .map(|w| Linear::zeros(w[0], w[1]))
            .collect();
        Self { layers }
    }

    pub fn init(dims: &[usize], stream: &mut RandomStream) -> Self {
        let layers = dims
            .windows(2)
            .map(|w| Linear::init(w[0], w[1], stream))
            .collect();
        Self { layers }
    }

    /// Forward pass. `dropout` carries the rate and the stream driving the
    /// masks; pass `None` for inference (identity).
    pub fn forward(
        &self,
        x: &[f64],
        dropout: Option<(f64, &mut RandomStream)>,
    ) -> StackTrace {
        let mut layer_inputs = Vec::with_capacity(self.layers.len());
        let mut post_relu = Vec::with_capacity(self.layers.len());
        let mut masks_acc: Option<(f64, &mut RandomStream, Vec<Vec<f64>>)> =
            dropout.map(|(p, s)| (p, s, Vec::with_capacity(self.layers.len())));
        let mut cur = x.to_vec();
        for layer in &self.layers {
            layer_inputs.push(cur.clone());
            let mut h = layer.forward(&cur);
            for v in &mut h {
                if *v < 0.0 {
                    *v = 0.0;
                }
            }
            post_relu.push(h.clone());
            if let Some((p, stream, masks)) = masks_acc.as_mut() {
                if *p > 0.0 {
                    let keep = 1.0 - *p;
                    let mask: Vec<f64> = h
                        .iter()
                        .map(|_| {
                            if stream.next_uniform() < keep {
                                1.0 / keep
                            } else {
                                0.0
                            }
                        })
                        .collect();
                    for (v, m) in h.iter_mut().zip(&mask) {
                        *v *= m;
                    }
                    masks.push(mask);
                } else {
                    masks.push(vec![1.0; h.len()]);
                }
            }
            cur = h;
        }
        StackTrace {
            layer_inputs,
            post_relu,
            masks: masks_acc.map(|(_, _, m)| m),
            output: cur,
        }
    }

    /// Backward pass through the whole stack; accumulates layer gradients
    /// into `grads` (same order as `layers`) and returns d(input).
    pub fn backward(
        &self,
        trace: &StackTrace,
        d_output: &[f64],
        grads: &mut [LinearGrad],
    ) -> Vec<f64> {
        debug_assert_eq!(grads.len(), self.layers.len());
        let mut d = d_output.to_vec();
        for idx in (0..self.layers.len()).rev() {
            if let Some(masks) = &trace.masks {
                for (dv, m) in d.iter_mut().zip(&masks[idx]) {
                    *dv *= m;
                }
            }
            for (dv, h) in d.iter_mut().zip(&trace.post_relu[idx]) {
                if *h <= 0.0 {
                    *dv = 0.0;
                }
            }
            d = self.layers[idx].backward(&trace.layer_inputs[idx], &d, &mut grads[idx]);
        }
        d
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Linear::param_count).sum()
    }

    pub fn grads_like(&self) -> Vec<LinearGrad> {
        self.layers.iter().map(LinearGrad::zeros_like).collect()
    }
}
