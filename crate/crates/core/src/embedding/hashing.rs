use std::hash::Hasher;

use fnv::FnvHasher;

use super::{Embedder, EmbeddingError};

/// Offline reference encoder: signed feature hashing of character 3- to
/// 5-grams. Bitwise deterministic across runs and platforms.
#[derive(Debug, Clone)]
pub struct HashingEmbedder {
    dimension: usize,
    min_n: usize,
    max_n: usize,
}

impl Default for HashingEmbedder {
    fn default() -> Self {
        Self::new(512)
    }
}

impl HashingEmbedder {
    pub fn new(dimension: usize) -> Self {
        assert!(dimension > 0, "dimension must be positive");
        Self {
            dimension,
            min_n: 3,
            max_n: 5,
        }
    }

    /// Raw count vector for one text.
    pub fn features(&self, text: &str) -> Vec<f64> {
        let mut out = vec![0.0; self.dimension];
        // Lowercase, collapse whitespace, pad so word edges form n-grams.
        let mut chars = vec![' '];
        for word in text.split_whitespace() {
            chars.extend(word.chars().flat_map(char::to_lowercase));
            chars.push(' ');
        }
        let mut buf = String::new();
        for n in self.min_n..=self.max_n {
            for window in chars.windows(n) {
                buf.clear();
                buf.extend(window);
                let mut h = FnvHasher::default();
                h.write(buf.as_bytes());
                let hash = h.finish();
                let index = (hash % self.dimension as u64) as usize;
                let sign = if hash >> 63 == 0 { 1.0 } else { -1.0 };
                out[index] += sign;
            }
        }
        out
    }
}

impl Embedder for HashingEmbedder {
    fn name(&self) -> &str {
        "hashing-char3to5"
    }

    fn dimension(&self) -> usize {
        self.dimension
    }

    fn deterministic(&self) -> bool {
        true
    }

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, EmbeddingError> {
        Ok(texts.iter().map(|t| self.features(t)).collect())
    }
}
