use xxhash_rust::xxh64::xxh64;

use super::{check_non_empty, EmbedError, Embedder, EmbeddingVector};
use crate::text::{is_stopword, tokens};

/// Seed for token hashing; changing it invalidates every stored fixture.
pub const HASH_SEED: u64 = 0x5eed_0f5e_c7a6;

pub(super) const MIN_DIMS: usize = 8;

/// Signed feature hashing of lowercased tokens into `dims` buckets, then L2
/// normalisation. Stopwords are skipped; a text with no remaining tokens is
/// hashed as a whole.
#[derive(Debug, Clone)]
pub struct DeterministicEmbedder {
    dims: usize,
}

impl DeterministicEmbedder {
    /// Panics if `dims < 8`.
    pub fn new(dims: usize) -> Self {
        assert!(dims >= MIN_DIMS, "deterministic embedder needs dims >= {MIN_DIMS}");
        Self { dims }
    }

    pub fn embed_one(&self, text: &str) -> EmbeddingVector {
        let mut acc = vec![0.0f64; self.dims];
        let content: Vec<String> = tokens(text).into_iter().filter(|t| !is_stopword(t)).collect();
        if content.is_empty() {
            self.accumulate(text.as_bytes(), &mut acc);
        } else {
            for t in &content {
                self.accumulate(t.as_bytes(), &mut acc);
            }
        }
        // Opposite-signed collisions can cancel; fall back to the raw text so
        // the vector is never zero.
        if acc.iter().all(|&v| v == 0.0) {
            acc = vec![0.0; self.dims];
            self.accumulate(text.as_bytes(), &mut acc);
        }
        EmbeddingVector::normalized(acc).expect("hashed vector has a non-zero entry")
    }

    fn accumulate(&self, bytes: &[u8], acc: &mut [f64]) {
        let (index, sign) = bucket(bytes, self.dims);
        acc[index] += sign;
    }
}

/// Bucket index (`hash mod dims`) and sign (top hash bit) for a token.
pub(crate) fn bucket(bytes: &[u8], dims: usize) -> (usize, f64) {
    let h = xxh64(bytes, HASH_SEED);
    let sign = if h >> 63 == 1 { -1.0 } else { 1.0 };
    ((h % dims as u64) as usize, sign)
}

impl Embedder for DeterministicEmbedder {
    fn dims(&self) -> usize {
        self.dims
    }

    fn embed_texts(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>, EmbedError> {
        check_non_empty(texts)?;
        Ok(texts.iter().map(|t| self.embed_one(t)).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sim(e: &DeterministicEmbedder, a: &str, b: &str) -> f64 {
        e.embed_one(a).cosine(&e.embed_one(b)).unwrap()
    }

    #[test]
    fn purity_and_order_invariance() {
        let e = DeterministicEmbedder::new(384);
        let out = e.embed_texts(&["a", "a"]).unwrap();
        assert_eq!(out[0], out[1]);
        assert_eq!(e.embed_one("x y"), e.embed_one("y x"));
    }

    #[test]
    fn distinct_tokens_separate() {
        let e = DeterministicEmbedder::new(384);
        let out = e.embed_texts(&["alpha", "beta"]).unwrap();
        for v in &out {
            assert!((v.norm() - 1.0).abs() < 1e-6);
        }
        assert!(out[0].cosine(&out[1]).unwrap() < 1.0);
    }

    #[test]
    fn single_token_is_signed_one_hot() {
        let e = DeterministicEmbedder::new(64);
        let v = e.embed_one("handover");
        let (index, sign) = bucket(b"handover", 64);
        for (i, &x) in v.values().iter().enumerate() {
            let expected = if i == index { sign as f32 } else { 0.0 };
            assert_eq!(x, expected);
        }
    }

    #[test]
    fn token_overlap_raises_similarity() {
        let e = DeterministicEmbedder::new(384);
        let near = sim(&e, "lte handover", "lte handover procedure");
        let far = sim(&e, "lte handover", "ip multimedia subsystem");
        assert!(near > far, "{near} <= {far}");
        // two of three tokens shared: 2 / sqrt(2 * 3)
        assert!((near - 2.0 / 6f64.sqrt()).abs() < 1e-6);
    }

    #[test]
    fn stopword_only_text_still_embeds() {
        let e = DeterministicEmbedder::new(32);
        let v = e.embed_one("the of and");
        assert!((v.norm() - 1.0).abs() < 1e-6);
        assert!(matches!(e.embed_texts(&["ok", " "]), Err(EmbedError::EmptyText { index: 1 })));
    }

    /// Frozen output for "cell reselection" at 384 dims: two signed buckets.
    #[test]
    fn golden_vector() {
        let v = DeterministicEmbedder::new(384).embed_one("cell reselection");
        let nonzero: Vec<(usize, f32)> = v
            .values()
            .iter()
            .enumerate()
            .filter(|(_, &x)| x != 0.0)
            .map(|(i, &x)| (i, x))
            .collect();
        assert_eq!(nonzero, GOLDEN_CELL_RESELECTION);
    }

    const GOLDEN_CELL_RESELECTION: &[(usize, f32)] = &[(45, 0.707_106_77), (146, 0.707_106_77)];
}
