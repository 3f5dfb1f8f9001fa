//! Clip-to-description similarity: the text embedding dotted with the mean
//! of the clip's keyframe image embeddings.
//!
//! Stored values are `f32`; means and dot products accumulate in `f64`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adapter::AdapterParams;
use crate::attributes::AttributeDescription;
use crate::corpus::{embed_text, EmbeddingStore, TextEmbedder};
use crate::keyframes::{KeyframeMap, KeyframeSet};
use crate::scalar::{dot_f64, Scalar};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipScore {
    pub clip_id: String,
    pub score: f64,
    pub n_keyframes_used: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoringOptions {
    /// Re-normalize the mean keyframe embedding (ablation; off by default).
    pub renormalize_mean: bool,
}

/// Mean of the selected frame embeddings, each mapped through `adapter` first.
pub fn clip_embedding<T: Scalar>(
    store: &EmbeddingStore,
    clip_id: &str,
    frames: &KeyframeSet,
    adapter: Option<&AdapterParams<T>>,
    renormalize: bool,
) -> Result<Vec<f64>> {
    let index = store
        .position(clip_id)
        .ok_or_else(|| Error::UnknownClip(clip_id.to_string()))?;
    if frames.indices.is_empty() {
        return Err(Error::EmptyFrames(clip_id.to_string()));
    }
    let n_frames = store.clip_at(index).record.n_frames;
    let d = store.image_dim();
    if let Some(a) = adapter {
        if a.dim != d {
            return Err(Error::Dimension {
                expected: d,
                got: a.dim,
            });
        }
    }

    let mut sum = vec![0.0f64; d];
    for &t in &frames.indices {
        if t >= n_frames {
            return Err(Error::Keyframes(format!(
                "frame {t} out of range for clip `{clip_id}` with {n_frames} frames"
            )));
        }
        let row = store.frame(index, t);
        match adapter {
            None => {
                for (s, &x) in sum.iter_mut().zip(row) {
                    *s += x as f64;
                }
            }
            Some(a) => {
                let e: Vec<T> = row.iter().map(|&x| T::from_f64_rounded(x as f64)).collect();
                for (s, x) in sum.iter_mut().zip(a.apply(&e)?) {
                    *s += x.to_f64_lossless();
                }
            }
        }
    }
    let n = frames.indices.len() as f64;
    for s in &mut sum {
        *s /= n;
    }
    if renormalize {
        let norm = crate::scalar::l2_norm_f64(&sum);
        if norm > 0.0 {
            sum.iter_mut().for_each(|s| *s /= norm);
        }
    }
    Ok(sum)
}

/// Dot product of equal-length vectors, accumulated in `f64`.
pub fn similarity<T: Scalar>(text: &[T], clip: &[T]) -> Result<T> {
    if text.len() != clip.len() {
        return Err(Error::Dimension {
            expected: text.len(),
            got: clip.len(),
        });
    }
    Ok(T::from_f64_rounded(dot_f64(text, clip)))
}

/// Precomputed clip embeddings of a whole databank, in `clip_id` order.
#[derive(Debug, Clone)]
pub struct ClipIndex {
    ids: Vec<String>,
    n_used: Vec<usize>,
    dim: usize,
    rows: Vec<f64>,
}

impl ClipIndex {
    pub fn build<T: Scalar>(
        store: &EmbeddingStore,
        keyframes: &KeyframeMap,
        adapter: Option<&AdapterParams<T>>,
        options: ScoringOptions,
    ) -> Result<Self> {
        let built: Vec<(String, usize, Vec<f64>)> = store
            .clips()
            .collect::<Vec<_>>()
            .par_iter()
            .map(|clip| {
                let id = &clip.record.clip_id;
                let frames = keyframes
                    .get(id)
                    .ok_or_else(|| Error::Keyframes(format!("no keyframes for clip `{id}`")))?;
                let v = clip_embedding(store, id, frames, adapter, options.renormalize_mean)?;
                Ok((id.clone(), frames.indices.len(), v))
            })
            .collect::<Result<_>>()?;
        let dim = store.image_dim();
        let mut index = Self {
            ids: Vec::with_capacity(built.len()),
            n_used: Vec::with_capacity(built.len()),
            dim,
            rows: Vec::with_capacity(built.len() * dim),
        };
        for (id, n, v) in built {
            index.ids.push(id);
            index.n_used.push(n);
            index.rows.extend(v);
        }
        Ok(index)
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn embedding(&self, i: usize) -> &[f64] {
        &self.rows[i * self.dim..(i + 1) * self.dim]
    }

    /// Score every clip against `text`; output in `clip_id` order.
    pub fn score(&self, text: &[f32]) -> Result<Vec<ClipScore>> {
        if text.len() != self.dim {
            return Err(Error::Dimension {
                expected: self.dim,
                got: text.len(),
            });
        }
        let scores: Vec<f64> = self
            .rows
            .par_chunks(self.dim.max(1))
            .map(|row| dot_f64(text, row))
            .collect();
        scores
            .into_iter()
            .enumerate()
            .map(|(i, score)| {
                if !score.is_finite() {
                    return Err(Error::Numerical {
                        context: format!("clip `{}`", self.ids[i]),
                        message: "non-finite score".into(),
                    });
                }
                Ok(ClipScore {
                    clip_id: self.ids[i].clone(),
                    score,
                    n_keyframes_used: self.n_used[i],
                })
            })
            .collect()
    }
}

/// Score every databank clip against one description.
pub fn score_all<T: Scalar>(
    store: &EmbeddingStore,
    attr: &AttributeDescription,
    keyframes: &KeyframeMap,
    adapter: Option<&AdapterParams<T>>,
    options: ScoringOptions,
    embedder: &dyn TextEmbedder,
) -> Result<Vec<ClipScore>> {
    let text = embed_text(store, &attr.text, embedder)?;
    ClipIndex::build(store, keyframes, adapter, options)?.score(&text)
}
