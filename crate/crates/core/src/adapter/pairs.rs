use std::collections::BTreeMap;

use super::TrainPair;
use crate::attributes::ClipAttributes;
use crate::corpus::{embed_text, EmbeddingStore, TextEmbedder};
use crate::keyframes::KeyframeMap;
use crate::scalar::{cast_vec, Scalar};
use crate::scoring::clip_embedding;
use crate::{Error, Result};

/// Contrastive pairs for the given training clips.
///
/// With `per_keyframe`, one pair per keyframe of each clip; otherwise one pair
/// per clip built from its mean keyframe embedding.
pub fn build_training_pairs<T: Scalar>(
    store: &EmbeddingStore,
    attrs: &BTreeMap<String, ClipAttributes>,
    keyframes: &KeyframeMap,
    train_ids: &[String],
    per_keyframe: bool,
    embedder: &dyn TextEmbedder,
) -> Result<Vec<TrainPair<T>>> {
    let missing: Vec<String> = train_ids
        .iter()
        .filter(|id| !attrs.contains_key(*id))
        .cloned()
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingDescriptions(missing));
    }

    let mut ids: Vec<&String> = train_ids.iter().collect();
    ids.sort();
    ids.dedup();

    let mut pairs = Vec::new();
    for id in ids {
        let index = store.position(id).ok_or_else(|| Error::UnknownClip(id.clone()))?;
        let frames = keyframes
            .get(id.as_str())
            .ok_or_else(|| Error::Keyframes(format!("no keyframes for clip `{id}`")))?;
        let clip_attrs = &attrs[id.as_str()];
        let positive: Vec<T> = cast_vec(&embed_text(store, &clip_attrs.positive.text, embedder)?);
        let negative: Vec<T> = cast_vec(&embed_text(store, &clip_attrs.negative.text, embedder)?);

        if per_keyframe {
            for &t in &frames.indices {
                pairs.push(TrainPair::new(
                    format!("{id}#{t}"),
                    cast_vec(store.frame(index, t)),
                    positive.clone(),
                    negative.clone(),
                )?);
            }
        } else {
            let mean = clip_embedding::<f64>(store, id, frames, None, false)?;
            pairs.push(TrainPair::new(id.clone(), cast_vec(&mean), positive, negative)?);
        }
    }
    Ok(pairs)
}
