use std::sync::atomic::{AtomicUsize, Ordering};

use sha2::{Digest, Sha256};

use super::store::EmbeddingStore;
use super::text_cache::text_key;
use crate::{Error, Result};

/// External text encoder of the joint embedding space.
pub trait TextEmbedder: Send + Sync {
    fn id(&self) -> &str;

    fn embed(&self, text: &str) -> Result<Vec<f32>>;
}

/// Cache-only mode: every miss is an error.
#[derive(Debug, Default, Clone, Copy)]
pub struct NoEmbedder;

impl TextEmbedder for NoEmbedder {
    fn id(&self) -> &str {
        "none"
    }

    fn embed(&self, _text: &str) -> Result<Vec<f32>> {
        Err(Error::Embedder("no text embedder configured".into()))
    }
}

/// Deterministic offline embedder: signed feature hashing of lowercase word
/// tokens. Shares no semantics with a real encoder; used for fixtures and
/// offline runs.
#[derive(Debug)]
pub struct HashingEmbedder {
    dim: usize,
    calls: AtomicUsize,
}

impl HashingEmbedder {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            calls: AtomicUsize::new(0),
        }
    }

    /// Number of `embed` calls so far.
    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::Relaxed)
    }
}

impl TextEmbedder for HashingEmbedder {
    fn id(&self) -> &str {
        "hashing"
    }

    fn embed(&self, text: &str) -> Result<Vec<f32>> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        let mut v = vec![0.0f32; self.dim];
        for token in text
            .split(|c: char| !c.is_alphanumeric())
            .filter(|t| !t.is_empty())
        {
            let h = Sha256::digest(token.to_lowercase().as_bytes());
            let bucket = u64::from_le_bytes(h[..8].try_into().unwrap()) as usize % self.dim;
            let sign = if h[8] & 1 == 0 { 1.0 } else { -1.0 };
            v[bucket] += sign;
        }
        Ok(v)
    }
}

/// Unit text embedding of `text`, served from the store's cache when present.
pub fn embed_text(store: &EmbeddingStore, text: &str, embedder: &dyn TextEmbedder) -> Result<Vec<f32>> {
    let key = text_key(text);
    if let Some(v) = store.text_cache().get(&key) {
        return Ok(v.to_vec());
    }
    let mut v = embedder.embed(text).map_err(|e| Error::EmbedderUnavailable {
        hash: key.to_string(),
        reason: e.to_string(),
    })?;
    if v.len() != store.image_dim() {
        return Err(Error::Dimension {
            expected: store.image_dim(),
            got: v.len(),
        });
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::Embedder(format!("non-finite embedding for text {key}")));
    }
    let norm = crate::scalar::l2_norm_f64(&v);
    if norm == 0.0 {
        return Err(Error::Embedder(format!("zero embedding for text {key}")));
    }
    for x in &mut v {
        *x = (*x as f64 / norm) as f32;
    }
    Ok(store.text_cache().insert(key, v)?.to_vec())
}
