//! Goal-conditioned listener retrieval.
//!
//! Given what a speaker said and what the listener wants to achieve, a
//! language model describes the ideal listener's face; those descriptions are
//! matched against a databank of listener clips in a joint text-image
//! embedding space. An optional affine adapter, trained contrastively on goal
//! and anti-goal descriptions, refines the image side.
//!
//! Numeric routines are generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix the precision used by the command-line tools.

pub mod adapter;
pub mod attributes;
pub mod corpus;
mod error;
pub mod eval;
pub mod keyframes;
pub mod retrieval;
pub mod scalar;
pub mod scoring;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Adapter parameters as stored on disk.
pub type AdapterParamsF32 = adapter::AdapterParams<f32>;
/// Adapter parameters for gradient checking and high-precision training.
pub type AdapterParamsF64 = adapter::AdapterParams<f64>;
pub type TrainPairF32 = adapter::TrainPair<f32>;
pub type TrainPairF64 = adapter::TrainPair<f64>;
pub type TrainOutcomeF64 = adapter::TrainOutcome<f64>;
