//! Retrieval metrics and the multi-method evaluation harness.

mod metrics;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use metrics::{ci95, l2_distance, mean, median_rank, perceptual_loss, recall_at_k, Z_95};

use crate::adapter::AdapterParams;
use crate::attributes::{ClipAttributes, GoalRole};
use crate::corpus::{embed_text, EmbeddingStore, GoalSpec, TextEmbedder};
use crate::keyframes::KeyframeMap;
use crate::retrieval::{retrieve, Query};
use crate::scalar::Scalar;
use crate::scoring::{ClipIndex, ScoringOptions};
use crate::{Error, Result};

/// Recall cut-offs reported by default.
pub const DEFAULT_K_VALUES: [usize; 2] = [500, 1000];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    /// Goal descriptions, peak keyframes, adapter if given.
    OursSocial,
    /// Anti-goal descriptions, peak keyframes, adapter if given.
    OursRude,
    /// Goal descriptions, peak keyframes, never an adapter.
    NoAdapter,
    /// Goal descriptions, uniformly spaced frames, adapter if given.
    UniformFrames,
    /// Seeded uniform permutation of the databank.
    Random { seed: u64 },
}

impl Method {
    pub fn label(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::OursSocial => f.write_str("ours_social"),
            Method::OursRude => f.write_str("ours_rude"),
            Method::NoAdapter => f.write_str("no_adapter"),
            Method::UniformFrames => f.write_str("uniform_frames"),
            Method::Random { seed } => write!(f, "random:{seed}"),
        }
    }
}

impl Method {
    /// Parse a method name; bare `random` takes `default_seed`.
    pub fn parse(s: &str, default_seed: u64) -> Result<Self> {
        Ok(match s.trim() {
            "ours_social" => Method::OursSocial,
            "ours_rude" => Method::OursRude,
            "no_adapter" => Method::NoAdapter,
            "uniform_frames" => Method::UniformFrames,
            "random" => Method::Random { seed: default_seed },
            other => match other.strip_prefix("random:") {
                Some(seed) => Method::Random {
                    seed: seed
                        .parse()
                        .map_err(|_| Error::InvalidArgument(format!("bad random seed in `{other}`")))?,
                },
                None => {
                    return Err(Error::InvalidArgument(format!(
                        "unknown method `{other}` (expected ours_social, ours_rude, no_adapter, uniform_frames, random[:seed])"
                    )))
                }
            },
        })
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::parse(s, 0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerceptualSummary {
    pub mean: f64,
    /// Absent with fewer than two queries.
    pub ci95_low: Option<f64>,
    pub ci95_high: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportConfig {
    pub goal: String,
    pub negated_goal: String,
    pub keyframe_mode: String,
    /// Whether scoring went through a non-identity adapter.
    pub adapter: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub method: String,
    pub recall_at: BTreeMap<usize, f64>,
    pub median_rank: usize,
    pub perceptual: BTreeMap<String, PerceptualSummary>,
    pub n_queries: usize,
    pub databank_size: usize,
    pub config: ReportConfig,
}

/// Per-query outcome of one method.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryOutcome {
    pub query: String,
    pub rank: usize,
    pub prediction: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodOutcome {
    pub report: EvalReport,
    pub queries: Vec<QueryOutcome>,
}

/// Everything evaluation reads. Queries are the test-split clip ids; each
/// query's ground truth is its own listener clip, which stays in the databank.
pub struct EvalInputs<'a, T: Scalar> {
    pub store: &'a EmbeddingStore,
    pub attrs: &'a BTreeMap<String, ClipAttributes>,
    pub keyframes: &'a KeyframeMap,
    /// Frame sets for [`Method::UniformFrames`].
    pub uniform_keyframes: &'a KeyframeMap,
    pub adapter: Option<&'a AdapterParams<T>>,
    pub embedder: &'a dyn TextEmbedder,
    pub queries: &'a [String],
    pub goal: &'a GoalSpec,
    pub k_values: &'a [usize],
    pub scoring: ScoringOptions,
}

pub fn evaluate<T: Scalar>(inputs: &EvalInputs<'_, T>, methods: &[Method]) -> Result<Vec<EvalReport>> {
    methods
        .iter()
        .map(|m| run_method(inputs, *m).map(|o| o.report))
        .collect()
}

pub fn run_method<T: Scalar>(inputs: &EvalInputs<'_, T>, method: Method) -> Result<MethodOutcome> {
    let store = inputs.store;
    if store.is_empty() {
        return Err(Error::EmptyDatabank);
    }
    if inputs.queries.is_empty() {
        return Err(Error::InvalidArgument("no evaluation queries".into()));
    }
    let mut queries: Vec<&String> = inputs.queries.iter().collect();
    queries.sort();
    queries.dedup();
    for q in &queries {
        store.clip(q)?;
    }

    let outcomes = match method {
        Method::Random { seed } => random_outcomes(store, &queries, seed),
        _ => {
            let (role, frames, adapter) = match method {
                Method::OursSocial => (GoalRole::Positive, inputs.keyframes, inputs.adapter),
                Method::OursRude => (GoalRole::Negative, inputs.keyframes, inputs.adapter),
                Method::NoAdapter => (GoalRole::Positive, inputs.keyframes, None),
                Method::UniformFrames => (GoalRole::Positive, inputs.uniform_keyframes, inputs.adapter),
                Method::Random { .. } => unreachable!(),
            };
            let index = ClipIndex::build(store, frames, adapter, inputs.scoring)?;
            queries
                .iter()
                .map(|q| {
                    let attr = inputs
                        .attrs
                        .get(q.as_str())
                        .ok_or_else(|| Error::MissingDescriptions(vec![q.to_string()]))?
                        .get(role);
                    let text = embed_text(store, &attr.text, inputs.embedder)?;
                    let result = retrieve(&index, &text, Query::Clip(q.to_string()), role, 1, Some(q))?;
                    Ok(QueryOutcome {
                        query: q.to_string(),
                        rank: result.rank_of_ground_truth.expect("ground truth requested"),
                        prediction: result.ranked[0].clip_id.clone(),
                    })
                })
                .collect::<Result<Vec<_>>>()?
        }
    };

    let report = summarize(inputs, method, &outcomes)?;
    Ok(MethodOutcome {
        report,
        queries: outcomes,
    })
}

fn random_outcomes(store: &EmbeddingStore, queries: &[&String], seed: u64) -> Vec<QueryOutcome> {
    let ids: Vec<&str> = store.clip_ids().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut perm: Vec<u32> = (0..ids.len() as u32).collect();
    queries
        .iter()
        .map(|q| {
            perm.shuffle(&mut rng);
            let target = store.position(q).expect("validated") as u32;
            let rank = perm.iter().position(|&i| i == target).expect("permutation") + 1;
            QueryOutcome {
                query: q.to_string(),
                rank,
                prediction: ids[perm[0] as usize].to_string(),
            }
        })
        .collect()
}

fn summarize<T: Scalar>(inputs: &EvalInputs<'_, T>, method: Method, outcomes: &[QueryOutcome]) -> Result<EvalReport> {
    let ranks: Vec<usize> = outcomes.iter().map(|o| o.rank).collect();
    let mut recall_at = BTreeMap::new();
    for &k in inputs.k_values {
        recall_at.insert(k, recall_at_k(&ranks, k)?);
    }

    let mut per_space: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for o in outcomes {
        for (space, d) in perceptual_loss(inputs.store, &o.prediction, &o.query)? {
            per_space.entry(space).or_default().push(d);
        }
    }
    let perceptual = per_space
        .into_iter()
        .map(|(space, values)| {
            let ci = ci95(&values).ok();
            let summary = PerceptualSummary {
                mean: mean(&values).expect("non-empty"),
                ci95_low: ci.map(|c| c.0),
                ci95_high: ci.map(|c| c.1),
            };
            (space, summary)
        })
        .collect();

    // an identity adapter scores exactly like no adapter, and reports the same
    let adapted = inputs.adapter.is_some_and(|a| !a.is_identity());
    let (keyframe_mode, adapter, seed) = match method {
        Method::Random { seed } => ("none", false, Some(seed)),
        Method::NoAdapter => ("peaks", false, None),
        Method::UniformFrames => ("uniform", adapted, None),
        Method::OursSocial | Method::OursRude => ("peaks", adapted, None),
    };
    Ok(EvalReport {
        method: method.label(),
        recall_at,
        median_rank: median_rank(&ranks)?,
        perceptual,
        n_queries: outcomes.len(),
        databank_size: inputs.store.len(),
        config: ReportConfig {
            goal: inputs.goal.goal.clone(),
            negated_goal: inputs.goal.negated_goal.clone(),
            keyframe_mode: keyframe_mode.into(),
            adapter,
            seed,
        },
    })
}
