//! Deterministic feature-hash text embedder.
//!
//! Tokens are lowercased alphanumeric runs; each token lands in one of 384
//! buckets via one hash and contributes ±1 via a second, and the result is
//! L2-normalized. Texts sharing vocabulary land nearby, which is the only
//! property the retrieval pipeline needs from an embedder.

use crate::numerics::DenseVector;

/// Embedding dimensionality.
pub const EMBED_DIM: usize = 384;

const FNV_PRIME: u64 = 0x0000_0100_0000_01B3;
const FNV_BASIS_INDEX: u64 = 0xCBF2_9CE4_8422_2325;
const FNV_BASIS_SIGN: u64 = 0xAF63_BD4C_8601_B7DF;

fn fnv1a(bytes: &[u8], basis: u64) -> u64 {
    let mut hash = basis;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(FNV_PRIME);
    }
    hash
}

/// Hash-embeds a text into a 384-dim unit vector (zero vector when no
/// tokens survive). Bit-exact for identical inputs on every platform.
pub fn embed_text(text: &str) -> DenseVector {
    let mut values = vec![0.0f64; EMBED_DIM];
    let lowered = text.to_lowercase();
    let mut any = false;
    for token in lowered.split(|c: char| !c.is_alphanumeric()) {
        if token.is_empty() {
            continue;
        }
        any = true;
        let bytes = token.as_bytes();
        let index = (fnv1a(bytes, FNV_BASIS_INDEX) % EMBED_DIM as u64) as usize;
        let sign = if fnv1a(bytes, FNV_BASIS_SIGN) & 1 == 0 { 1.0 } else { -1.0 };
        values[index] += sign;
    }
    if !any {
        return DenseVector::zeros(EMBED_DIM);
    }
    let norm: f64 = values.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        for v in &mut values {
            *v /= norm;
        }
    }
    DenseVector::new(values).expect("finite embedding")
}

/// Cosine similarity; unit or zero vectors make this a plain dot product
/// with a zero-norm guard.
pub fn cosine_similarity(a: &DenseVector, b: &DenseVector) -> f64 {
    let na = a.l2_norm();
    let nb = b.l2_norm();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    a.dot(b) / (na * nb)
}
