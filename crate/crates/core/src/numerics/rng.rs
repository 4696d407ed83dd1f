//! Counter-based deterministic random stream.
//!
//! The seed-search protocol needs bit-identical draws for a given
//! `(seed, stream_id, draw index)` on every platform, so the generator is a
//! pure function of those three integers: a splitmix64-style finalizer applied
//! to `base + counter * GOLDEN`, where `base` mixes seed and stream id. No
//! hidden global state, no platform-dependent paths.

use super::DenseVector;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seedable, splittable, counter-based random stream.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RandomStream {
    seed: u64,
    stream_id: u64,
    base: u64,
    counter: u64,
}

impl RandomStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let base = mix64(mix64(seed) ^ mix64(stream_id ^ 0xA5A5_A5A5_A5A5_A5A5));
        Self { seed, stream_id, base, counter: 0 }
    }

    /// A fresh stream over the same seed with a different stream id,
    /// independent of how many draws this stream has consumed.
    pub fn substream(&self, stream_id: u64) -> Self {
        Self::new(self.seed, stream_id)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    pub fn next_u64(&mut self) -> u64 {
        let out = mix64(self.base.wrapping_add(self.counter.wrapping_mul(GOLDEN)));
        self.counter += 1;
        out
    }

    /// Uniform draw in the open interval (0, 1), using the 53 high bits.
    pub fn next_uniform(&mut self) -> f64 {
        ((self.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in `[0, n)`.
    pub fn next_below(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        (self.next_u64() % n as u64) as usize
    }

    /// Standard normal variate via Box-Muller; consumes exactly two raw draws.
    pub fn next_gaussian(&mut self) -> f64 {
        let u1 = self.next_uniform();
        let u2 = self.next_uniform();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    /// `dim` independent standard-normal variates.
    pub fn gaussian_vector(&mut self, dim: usize) -> DenseVector {
        debug_assert!(dim > 0);
        let mut out = Vec::with_capacity(dim);
        for _ in 0..dim {
            out.push(self.next_gaussian());
        }
        DenseVector::new(out).expect("gaussian draws are finite")
    }

    /// Fisher-Yates shuffle driven by this stream.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.next_below(i + 1);
            items.swap(i, j);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_state_same_draws() {
        let mut a = RandomStream::new(42, 7);
        let mut b = RandomStream::new(42, 7);
        for _ in 0..100 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
        let va = a.gaussian_vector(16);
        let vb = b.gaussian_vector(16);
        assert_eq!(va.as_slice(), vb.as_slice());
    }

    #[test]
    fn different_stream_ids_diverge_quickly() {
        // Collision smoke test: streams split from one seed must differ in
        // at least one of the first 16 draws.
        for id in 1..50u64 {
            let mut a = RandomStream::new(2024, 0);
            let mut b = RandomStream::new(2024, id);
            let differs = (0..16).any(|_| a.next_u64() != b.next_u64());
            assert!(differs, "stream id {id} collided with stream 0");
        }
    }

    #[test]
    fn gaussian_moments_match_clt_bounds() {
        // Oracle: CLT. Mean of N draws is within 3/sqrt(N) of 0 with
        // overwhelming probability; the fixed seed freezes the outcome.
        let n = 100_000;
        let mut stream = RandomStream::new(42, 1);
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for _ in 0..n {
            let z = stream.next_gaussian();
            sum += z;
            sum_sq += z * z;
        }
        let mean = sum / n as f64;
        let var = sum_sq / n as f64 - mean * mean;
        assert!(mean.abs() < 0.02, "mean {mean}");
        assert!((var - 1.0).abs() < 0.03, "var {var}");
    }

    #[test]
    fn uniform_is_strictly_inside_unit_interval() {
        let mut stream = RandomStream::new(0, 0);
        for _ in 0..10_000 {
            let u = stream.next_uniform();
            assert!(u > 0.0 && u < 1.0);
        }
    }

    #[test]
    fn substream_is_independent_of_parent_position() {
        let mut a = RandomStream::new(9, 3);
        for _ in 0..57 {
            a.next_u64();
        }
        let mut sub_after = a.substream(11);
        let mut sub_fresh = RandomStream::new(9, 11);
        for _ in 0..8 {
            assert_eq!(sub_after.next_u64(), sub_fresh.next_u64());
        }
    }
}
