//! Clip and databank data model, the on-disk embedding-store format, and
//! train/test splitting.

mod embedder;
mod f32io;
mod manifest;
mod split;
mod store;
pub mod synthetic;
mod text_cache;

use serde::{Deserialize, Serialize};

pub use embedder::{embed_text, HashingEmbedder, NoEmbedder, TextEmbedder};
pub use f32io::{read_f32_file, write_f32_file};
pub use manifest::{ClipFiles, ClipRecord, FaceSpace, Manifest, Split, MANIFEST_VERSION};
pub use split::{split_dataset, SplitAssignment};
pub use store::{
    load_store, load_store_with, write_store, ClipData, EmbeddingStore, LoadOptions, LoadReport,
    ZeroRow,
};
pub use text_cache::{text_key, TextCache, TextKey, TEXT_CACHE_MAGIC};

/// Frames per clip in the benchmark (15.36 s at 25 fps).
pub const DEFAULT_N_FRAMES: usize = 384;
pub const DEFAULT_FPS: f64 = 25.0;
pub const DEFAULT_IMAGE_DIM: usize = 512;

/// Tolerance on unit-norm rows after load.
pub const UNIT_NORM_TOLERANCE: f64 = 1e-6;

/// A listener goal and its negation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoalSpec {
    pub goal: String,
    pub negated_goal: String,
}

impl GoalSpec {
    pub fn new(goal: impl Into<String>, negated_goal: impl Into<String>) -> crate::Result<Self> {
        let spec = Self {
            goal: goal.into(),
            negated_goal: negated_goal.into(),
        };
        if spec.goal.trim().is_empty() || spec.negated_goal.trim().is_empty() {
            return Err(crate::Error::InvalidArgument(
                "goal and negated goal must both be non-empty".into(),
            ));
        }
        Ok(spec)
    }
}

impl Default for GoalSpec {
    fn default() -> Self {
        Self {
            goal: "be social".into(),
            negated_goal: "not be social".into(),
        }
    }
}
