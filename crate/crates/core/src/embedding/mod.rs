//! Text-to-vector encoding and cosine similarity.
//!
//! Backends implement [`Embedder`] and return raw vectors; [`embed`] checks
//! them and L2-normalises, so every [`EmbeddingVector`] leaving this module
//! has unit norm regardless of backend.

mod hashing;
mod remote;

use serde::{Deserialize, Serialize};

pub use hashing::HashingEmbedder;
pub use remote::{RemoteEmbedder, RemoteEmbedderConfig};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EmbeddingError {
    #[error("nothing to embed")]
    NoInput,
    #[error("no reference text (input {0})")]
    NoReferenceText(usize),
    #[error("embedding backend misconfigured: {0}")]
    Config(String),
    #[error("embedding backend unreachable: {0}")]
    Transport(String),
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("non-finite value in embedding")]
    NonFinite,
    #[error("zero-norm vector")]
    ZeroNorm,
}

/// A finite, fixed-length vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    values: Vec<f64>,
}

impl EmbeddingVector {
    pub fn new(values: Vec<f64>) -> Result<Self, EmbeddingError> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(EmbeddingError::NonFinite);
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn dimension(&self) -> usize {
        self.values.len()
    }

    pub fn norm(&self) -> f64 {
        dot(&self.values, &self.values).sqrt()
    }

    fn normalized(mut self) -> Result<Self, EmbeddingError> {
        let norm = self.norm();
        if norm == 0.0 {
            return Err(EmbeddingError::ZeroNorm);
        }
        self.values.iter_mut().for_each(|v| *v /= norm);
        Ok(self)
    }
}

/// A text encoder. Must be deterministic to be used in simulations.
pub trait Embedder: Send + Sync {
    fn name(&self) -> &str;
    fn dimension(&self) -> usize;
    fn deterministic(&self) -> bool;
    /// `false` when calls must be serialised by the caller.
    fn reentrant(&self) -> bool {
        true
    }
    /// One raw (not necessarily normalised) vector per text.
    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, EmbeddingError>;
}

/// Embed `texts` in order and L2-normalise the results.
pub fn embed<E: Embedder + ?Sized>(backend: &E, texts: &[&str]) -> Result<Vec<EmbeddingVector>, EmbeddingError> {
    if texts.is_empty() {
        return Err(EmbeddingError::NoInput);
    }
    if let Some(i) = texts.iter().position(|t| t.trim().is_empty()) {
        return Err(EmbeddingError::NoReferenceText(i));
    }
    let raw = backend.embed_batch(texts)?;
    if raw.len() != texts.len() {
        return Err(EmbeddingError::Transport(format!(
            "backend returned {} vectors for {} texts",
            raw.len(),
            texts.len()
        )));
    }
    let dim = backend.dimension();
    raw.into_iter()
        .map(|v| {
            if v.len() != dim {
                return Err(EmbeddingError::DimensionMismatch(dim, v.len()));
            }
            EmbeddingVector::new(v)?.normalized()
        })
        .collect()
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `dot(a, b) / (|a| |b|)`, clamped into `[-1, 1]` against rounding.
pub fn cosine_similarity(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64, EmbeddingError> {
    if a.dimension() != b.dimension() {
        return Err(EmbeddingError::DimensionMismatch(a.dimension(), b.dimension()));
    }
    let (na, nb) = (a.norm(), b.norm());
    if na == 0.0 || nb == 0.0 {
        return Err(EmbeddingError::ZeroNorm);
    }
    Ok((dot(&a.values, &b.values) / (na * nb)).clamp(-1.0, 1.0))
}

/// Pairwise cosine matrix. Symmetric by construction.
pub fn similarity_matrix(vectors: &[EmbeddingVector]) -> Result<Vec<Vec<f64>>, EmbeddingError> {
    if vectors.is_empty() {
        return Err(EmbeddingError::NoInput);
    }
    let n = vectors.len();
    let mut m = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i..n {
            let c = cosine_similarity(&vectors[i], &vectors[j])?;
            m[i][j] = c;
            m[j][i] = c;
        }
    }
    Ok(m)
}
