//! Ranking of the databank against a listener description.

use serde::{Deserialize, Serialize};

use crate::attributes::GoalRole;
use crate::scoring::{ClipIndex, ClipScore};
use crate::{Error, Result};

/// What was asked.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Query {
    Clip(String),
    Transcript(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedClip {
    pub clip_id: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalResult {
    pub query: Query,
    pub role: GoalRole,
    /// Best first; equal scores in ascending `clip_id` order.
    pub ranked: Vec<RankedClip>,
    /// 1-based rank of the ground-truth clip in the full ranking.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rank_of_ground_truth: Option<usize>,
}

/// Sort by score descending, ties by ascending clip id.
pub fn rank_scores(scores: Vec<ClipScore>) -> Result<Vec<RankedClip>> {
    if let Some(bad) = scores.iter().find(|s| !s.score.is_finite()) {
        return Err(Error::Numerical {
            context: format!("clip `{}`", bad.clip_id),
            message: "non-finite score".into(),
        });
    }
    let mut ranked: Vec<RankedClip> = scores
        .into_iter()
        .map(|s| RankedClip {
            clip_id: s.clip_id,
            score: s.score,
        })
        .collect();
    ranked.sort_by(|a, b| {
        b.score
            .partial_cmp(&a.score)
            .expect("finite scores")
            .then_with(|| a.clip_id.cmp(&b.clip_id))
    });
    Ok(ranked)
}

/// Rank `scores` and keep the best `top_k`.
pub fn retrieve_from_scores(
    scores: Vec<ClipScore>,
    query: Query,
    role: GoalRole,
    top_k: usize,
    ground_truth: Option<&str>,
) -> Result<RetrievalResult> {
    if top_k < 1 {
        return Err(Error::InvalidArgument("top_k must be at least 1".into()));
    }
    if scores.is_empty() {
        return Err(Error::EmptyDatabank);
    }
    let mut ranked = rank_scores(scores)?;
    let rank_of_ground_truth = match ground_truth {
        Some(id) => Some(position_of(id, &ranked)?),
        None => None,
    };
    ranked.truncate(top_k);
    Ok(RetrievalResult {
        query,
        role,
        ranked,
        rank_of_ground_truth,
    })
}

/// Top-`top_k` clips of the index for a unit text embedding.
pub fn retrieve(
    index: &ClipIndex,
    text: &[f32],
    query: Query,
    role: GoalRole,
    top_k: usize,
    ground_truth: Option<&str>,
) -> Result<RetrievalResult> {
    if index.is_empty() {
        return Err(Error::EmptyDatabank);
    }
    retrieve_from_scores(index.score(text)?, query, role, top_k, ground_truth)
}

/// 1-based rank of `target` in a full-databank result.
pub fn rank_of(target: &str, result: &RetrievalResult) -> Result<usize> {
    position_of(target, &result.ranked)
}

fn position_of(target: &str, ranked: &[RankedClip]) -> Result<usize> {
    ranked
        .iter()
        .position(|r| r.clip_id == target)
        .map(|p| p + 1)
        .ok_or_else(|| Error::UnknownClip(target.to_string()))
}
