use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("invalid manifest {path}: {message}")]
    Manifest { path: PathBuf, message: String },

    #[error("clip `{clip_id}`: {message}")]
    Load { clip_id: String, message: String },

    #[error("unknown clip `{0}`")]
    UnknownClip(String),

    #[error("invalid split: {0}")]
    Split(String),

    #[error("text cache: {0}")]
    TextCache(String),

    #[error(
        "no embedding cached for text {hash} and no text embedder is reachable \
         ({reason}); precompute it with the extraction tool's embed-texts step"
    )]
    EmbedderUnavailable { hash: String, reason: String },

    #[error("text embedder failed: {0}")]
    Embedder(String),

    #[error("keyframe selection: {0}")]
    Keyframes(String),

    #[error("template `{name}`: {message}")]
    Template { name: String, message: String },

    #[error("completion backend: {message}")]
    Backend { message: String, retryable: bool },

    #[error("replay cache has no completion for prompt {0}")]
    ReplayMiss(String),

    #[error("could not parse completion: {message}; raw completion: {raw:?}")]
    Parse { message: String, raw: String },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("empty frame set for clip `{0}`")]
    EmptyFrames(String),

    #[error("numerical error on {context}: {message}")]
    Numerical { context: String, message: String },

    #[error("training diverged at epoch {epoch}, step {step} (loss trace so far: {trace:?})")]
    Diverged {
        epoch: usize,
        step: usize,
        trace: Vec<f64>,
    },

    #[error("missing attribute descriptions for clips: {0:?}")]
    MissingDescriptions(Vec<String>),

    #[error("clip `{clip_id}`: {source}")]
    InClip {
        clip_id: String,
        #[source]
        source: Box<Error>,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("empty databank")]
    EmptyDatabank,

    #[error("json error on {context}: {source}")]
    Json {
        context: String,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn load(clip_id: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Load {
            clip_id: clip_id.into(),
            message: message.into(),
        }
    }

    pub fn json(context: impl Into<String>, source: serde_json::Error) -> Self {
        Error::Json {
            context: context.into(),
            source,
        }
    }

    /// Whether retrying the failed call may succeed.
    pub fn is_retryable(&self) -> bool {
        matches!(self, Error::Backend { retryable: true, .. })
    }
}
