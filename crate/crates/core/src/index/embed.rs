use thiserror::Error;

use crate::text::terms;

/// Smallest dimension [`hash_embed`] accepts.
pub const MIN_HASH_DIM: usize = 8;
pub const DEFAULT_HASH_DIM: usize = 64;

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("embedder backend failed: {0}")]
    Backend(String),
    #[error("embedder returned dimension {got}, expected {expected}")]
    Dimension { expected: usize, got: usize },
}

/// Maps text to a fixed-dimension unit vector.
pub trait Embedder: Send + Sync {
    /// Stable name; indexes refuse queries embedded by a different identity.
    fn identity(&self) -> String;
    fn dim(&self) -> usize;
    fn embed(&self, text: &str) -> Result<Vec<f32>, EmbedError>;

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Vec<f32>>, EmbedError> {
        texts.iter().map(|t| self.embed(t)).collect()
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Signed feature hashing of the bag of terms into `d` buckets, then L2
/// normalisation. Text without terms, or whose buckets cancel exactly, maps to
/// the basis vector e0.
pub fn hash_embed(text: &str, d: usize) -> Vec<f64> {
    assert!(d >= MIN_HASH_DIM, "hash_embed needs d >= {MIN_HASH_DIM}, got {d}");
    let mut v = vec![0.0f64; d];
    for term in terms(text) {
        let h = fnv1a(term.as_bytes());
        let bucket = (h % d as u64) as usize;
        let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
        v[bucket] += sign;
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        v.iter_mut().for_each(|x| *x = 0.0);
        v[0] = 1.0;
    } else {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    v
}

/// Normalises in place; a zero vector becomes e0.
pub fn normalize(v: &mut [f32]) {
    let norm = v.iter().map(|&x| f64::from(x) * f64::from(x)).sum::<f64>().sqrt();
    if norm == 0.0 {
        if let Some(first) = v.first_mut() {
            *first = 1.0;
        }
        return;
    }
    v.iter_mut().for_each(|x| *x = (f64::from(*x) / norm) as f32);
}

/// The built-in, model-free embedder.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HashEmbedder {
    dim: usize,
}

impl HashEmbedder {
    pub fn new(dim: usize) -> Self {
        assert!(dim >= MIN_HASH_DIM, "hash embedder needs dim >= {MIN_HASH_DIM}");
        Self { dim }
    }
}

impl Default for HashEmbedder {
    fn default() -> Self {
        Self::new(DEFAULT_HASH_DIM)
    }
}

impl Embedder for HashEmbedder {
    fn identity(&self) -> String {
        format!("hash-embed-v1/d{}", self.dim)
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<Vec<f32>, EmbedError> {
        let mut v: Vec<f32> = hash_embed(text, self.dim).into_iter().map(|x| x as f32).collect();
        normalize(&mut v);
        Ok(v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn norm(v: &[f64]) -> f64 {
        v.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    #[test]
    fn deterministic_and_unit_norm() {
        let a = hash_embed("the quick brown fox", 64);
        assert_eq!(a, hash_embed("the quick brown fox", 64));
        assert!((norm(&a) - 1.0).abs() < 1e-9);
        for text in ["x", "a b c d e f g h i j", "Ünïcödé wörds 42"] {
            assert!((norm(&hash_embed(text, 16)) - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn bag_semantics() {
        assert_eq!(hash_embed("a b", 64), hash_embed("b a", 64));
        assert_eq!(hash_embed("A, b!", 64), hash_embed("b a", 64));
    }

    #[test]
    fn empty_text_is_e0() {
        let e = hash_embed("", 8);
        assert_eq!(e[0], 1.0);
        assert!(e[1..].iter().all(|&x| x == 0.0));
        assert_eq!(hash_embed(" ,. ", 8), e);
    }

    #[test]
    #[should_panic]
    fn tiny_dimension_rejected() {
        hash_embed("a", 4);
    }

    #[test]
    fn f32_embedder_is_unit_norm() {
        let v = HashEmbedder::default().embed("some words here").unwrap();
        let n: f64 = v.iter().map(|&x| f64::from(x) * f64::from(x)).sum::<f64>().sqrt();
        assert!((n - 1.0).abs() < 1e-6);
        assert_eq!(v.len(), 64);
    }
}
