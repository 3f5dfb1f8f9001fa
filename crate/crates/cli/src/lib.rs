//! Command-line orchestration of the listener retrieval pipeline: run
//! configuration, stage functions and reproducible artifacts.

pub mod artifact;
pub mod config;
pub mod pipeline;
pub mod stages;

pub use config::{AdapterSource, EmbedderKind, RunConfig};
pub use pipeline::{run_pipeline, PipelineSummary, Stage, StageError, StageStatus};
