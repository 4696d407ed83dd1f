//! Deterministic math kernel: dense vectors and matrices, numerically stable
//! reductions, a counter-based random stream, and the Adam optimizer.
//!
//! Everything here is 64-bit floats. The golden values downstream require
//! ~1e-3 agreement after chained products, which f64 makes robust.

mod adam;
mod rng;

pub use adam::AdamState;
pub use rng::RandomStream;

use crate::error::{LpfError, Result};

/// A dense vector of finite 64-bit floats.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseVector {
    values: Vec<f64>,
}

impl DenseVector {
    /// Builds a vector, rejecting empty or non-finite input.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(LpfError::Domain("vector must be nonempty".into()));
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(LpfError::Domain(format!("non-finite entry {bad}")));
        }
        Ok(Self { values })
    }

    /// All-zero vector of the given length.
    pub fn zeros(len: usize) -> Self {
        Self { values: vec![0.0; len] }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.values
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub fn dot(&self, other: &DenseVector) -> f64 {
        debug_assert_eq!(self.len(), other.len());
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a * b)
            .sum()
    }

    pub fn l2_norm(&self) -> f64 {
        self.dot(self).sqrt()
    }
}

impl std::ops::Index<usize> for DenseVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.values[i]
    }
}

impl std::ops::IndexMut<usize> for DenseVector {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.values[i]
    }
}

impl std::ops::Deref for DenseVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.values
    }
}

/// A dense row-major matrix of 64-bit floats.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl DenseMatrix {
    pub fn new(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        if rows * cols != values.len() {
            return Err(LpfError::ShapeMismatch(format!(
                "{rows}x{cols} matrix needs {} values, got {}",
                rows * cols,
                values.len()
            )));
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(LpfError::Domain(format!("non-finite entry {bad}")));
        }
        Ok(Self { rows, cols, values })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, values: vec![0.0; rows * cols] }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.values[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.values[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.values[r * self.cols..(r + 1) * self.cols]
    }

    /// `y = A x` for a vector `x` of length `cols`.
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.cols);
        let mut out = vec![0.0; self.rows];
        for (r, o) in out.iter_mut().enumerate() {
            let row = self.row(r);
            let mut acc = 0.0;
            for (w, xv) in row.iter().zip(x) {
                acc += w * xv;
            }
            *o = acc;
        }
        out
    }

    /// `y = Aᵀ x` for a vector `x` of length `rows`.
    pub fn matvec_transposed(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.rows);
        let mut out = vec![0.0; self.cols];
        for (r, xv) in x.iter().enumerate() {
            let row = self.row(r);
            for (o, w) in out.iter_mut().zip(row) {
                *o += w * xv;
            }
        }
        out
    }
}

/// `log Σ exp(vᵢ)` computed by factoring out the maximum.
///
/// Finite whenever at least one entry is finite; errors on empty input.
pub fn logsumexp(v: &[f64]) -> Result<f64> {
    if v.is_empty() {
        return Err(LpfError::Domain("logsumexp of empty vector".into()));
    }
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Ok(max);
    }
    let sum: f64 = v.iter().map(|x| (x - max).exp()).sum();
    Ok(max + sum.ln())
}

/// Numerically stable softmax; shift-invariant by construction.
pub fn softmax(logits: &[f64]) -> Result<Vec<f64>> {
    if logits.is_empty() {
        return Err(LpfError::Domain("softmax of empty vector".into()));
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|x| (x - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / total).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn logsumexp_symmetric_zeros() {
        let v = [0.0, 0.0, 0.0];
        assert!((logsumexp(&v).unwrap() - 3.0_f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn logsumexp_dominated_terms() {
        let v = [-1e9, -1e9, 0.0];
        assert!(logsumexp(&v).unwrap().abs() < 1e-12);
    }

    #[test]
    fn logsumexp_one_two_three() {
        // Oracle: direct high-precision summation. exp(1)+exp(2)+exp(3) is far
        // from overflow so the naive sum is itself exact to f64 precision.
        let direct = (1f64.exp() + 2f64.exp() + 3f64.exp()).ln();
        let got = logsumexp(&[1.0, 2.0, 3.0]).unwrap();
        assert!((got - direct).abs() < 1e-12);
        assert!((got - 3.407_606_0).abs() < 1e-6);
    }

    #[test]
    fn logsumexp_empty_is_error() {
        assert!(logsumexp(&[]).is_err());
    }

    #[test]
    fn logsumexp_bounds() {
        let v = [0.3, -2.0, 5.5, 1.1];
        let max = 5.5;
        let lse = logsumexp(&v).unwrap();
        assert!(lse >= max);
        assert!(lse <= max + (v.len() as f64).ln());
    }

    #[test]
    fn softmax_symmetry() {
        for c in [-40.0, 0.0, 17.5] {
            let out = softmax(&[c, c, c]).unwrap();
            for p in out {
                assert!((p - 1.0 / 3.0).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn softmax_analytic_two_class() {
        let out = softmax(&[0.0, 2.0_f64.ln()]).unwrap();
        assert!((out[0] - 1.0 / 3.0).abs() < 1e-15);
        assert!((out[1] - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn softmax_one_two_three() {
        // Oracle: direct evaluation of exp(i)/Σexp(j).
        let direct: Vec<f64> = {
            let e: Vec<f64> = [1.0f64, 2.0, 3.0].iter().map(|x| x.exp()).collect();
            let s: f64 = e.iter().sum();
            e.iter().map(|x| x / s).collect()
        };
        let got = softmax(&[1.0, 2.0, 3.0]).unwrap();
        let expected = [0.090_030_57, 0.244_728_47, 0.665_240_96];
        for i in 0..3 {
            assert!((got[i] - direct[i]).abs() < 1e-15);
            assert!((got[i] - expected[i]).abs() < 1e-7);
        }
    }

    #[test]
    fn softmax_sums_to_one_and_shift_invariant() {
        let v = [0.4, -3.0, 2.2, 9.1];
        let a = softmax(&v).unwrap();
        assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let shifted: Vec<f64> = v.iter().map(|x| x + 123.456).collect();
        let b = softmax(&shifted).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn dense_vector_rejects_bad_input() {
        assert!(DenseVector::new(vec![]).is_err());
        assert!(DenseVector::new(vec![1.0, f64::NAN]).is_err());
        assert!(DenseVector::new(vec![1.0, f64::INFINITY]).is_err());
    }

    #[test]
    fn dense_matrix_shape_check() {
        assert!(DenseMatrix::new(2, 3, vec![0.0; 5]).is_err());
        let m = DenseMatrix::new(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        assert_eq!(m.matvec(&[1.0, 0.0, 0.0]), vec![1.0, 4.0]);
        assert_eq!(m.matvec_transposed(&[1.0, 1.0]), vec![5.0, 7.0, 9.0]);
    }
}
