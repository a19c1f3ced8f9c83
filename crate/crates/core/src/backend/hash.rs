use std::sync::atomic::{AtomicUsize, Ordering};

use async_trait::async_trait;

use super::{BackendError, EmbeddingBackend};

const FNV_OFFSET_BASIS: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

pub fn fnv1a_64(bytes: &[u8]) -> u64 {
    bytes.iter().fold(FNV_OFFSET_BASIS, |hash, &b| {
        (hash ^ u64::from(b)).wrapping_mul(FNV_PRIME)
    })
}

/// Deterministic feature-hashing embedder.
///
/// Lowercases the text, splits on whitespace, hashes every token with
/// FNV-1a 64 into `hash % dim`, counts occurrences and L2-normalizes. Text
/// without tokens maps to the zero vector. Output is identical on every
/// platform.
#[derive(Debug)]
pub struct HashEmbedder {
    dim: usize,
    model: String,
    calls: AtomicUsize,
}

impl HashEmbedder {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        Self {
            dim,
            model: format!("fnv1a-hash-{dim}"),
            calls: AtomicUsize::new(0),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of `embed` calls served so far.
    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn embed_one(&self, text: &str) -> Vec<f32> {
        let mut counts = vec![0u32; self.dim];
        for token in text.to_lowercase().split_whitespace() {
            let bucket = (fnv1a_64(token.as_bytes()) % self.dim as u64) as usize;
            counts[bucket] += 1;
        }
        let norm = counts
            .iter()
            .map(|&c| f64::from(c) * f64::from(c))
            .sum::<f64>()
            .sqrt();
        if norm == 0.0 {
            return vec![0.0; self.dim];
        }
        counts
            .into_iter()
            .map(|c| (f64::from(c) / norm) as f32)
            .collect()
    }
}

#[async_trait]
impl EmbeddingBackend for HashEmbedder {
    fn model(&self) -> &str {
        &self.model
    }

    async fn embed(&self, inputs: &[String]) -> Result<Vec<Vec<f32>>, BackendError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        Ok(inputs.iter().map(|t| self.embed_one(t)).collect())
    }
}
