//! Embedding-space adapter `A(e) = e + W·e + b`, trained with a two-way
//! contrastive loss against goal and anti-goal descriptions.

mod io;
mod loss;
mod pairs;
mod train;

use serde::{Deserialize, Serialize};

pub use io::{read_adapter, sidecar_path, write_adapter, AdapterFileMeta};
pub use loss::{gradient, infonce_loss, loss_terms, AdapterGrad, LossTerms};
pub use pairs::build_training_pairs;
pub use train::{mean_loss, sgd_step, train, TrainConfig, TrainOutcome};

use crate::scalar::Scalar;
use crate::{Error, Result};

/// Affine refinement of image embeddings; zero parameters mean identity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdapterParams<T> {
    pub dim: usize,
    /// `dim × dim`, row-major.
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Scalar> AdapterParams<T> {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            weight: vec![T::zero(); dim * dim],
            bias: vec![T::zero(); dim],
        }
    }

    pub fn from_parts(dim: usize, weight: Vec<T>, bias: Vec<T>) -> Result<Self> {
        if weight.len() != dim * dim {
            return Err(Error::Dimension {
                expected: dim * dim,
                got: weight.len(),
            });
        }
        if bias.len() != dim {
            return Err(Error::Dimension {
                expected: dim,
                got: bias.len(),
            });
        }
        if weight.iter().chain(&bias).any(|x| !x.is_finite()) {
            return Err(Error::Numerical {
                context: "adapter parameters".into(),
                message: "non-finite entry".into(),
            });
        }
        Ok(Self { dim, weight, bias })
    }

    pub fn is_identity(&self) -> bool {
        self.weight.iter().chain(&self.bias).all(|x| x.is_zero())
    }

    /// Number of learnable parameters.
    pub fn n_params(&self) -> usize {
        self.dim * self.dim + self.dim
    }

    pub fn apply(&self, e: &[T]) -> Result<Vec<T>> {
        if e.len() != self.dim {
            return Err(Error::Dimension {
                expected: self.dim,
                got: e.len(),
            });
        }
        Ok(self
            .weight
            .chunks_exact(self.dim)
            .zip(e)
            .zip(&self.bias)
            .map(|((row, &ei), &bi)| {
                let we: T = row.iter().zip(e).map(|(&w, &x)| w * x).sum();
                ei + we + bi
            })
            .collect())
    }

    pub fn cast<U: Scalar>(&self) -> AdapterParams<U> {
        AdapterParams {
            dim: self.dim,
            weight: crate::scalar::cast_vec(&self.weight),
            bias: crate::scalar::cast_vec(&self.bias),
        }
    }
}

/// `A(e) = e + W·e + b`.
pub fn apply_adapter<T: Scalar>(params: &AdapterParams<T>, e: &[T]) -> Result<Vec<T>> {
    params.apply(e)
}

/// One contrastive training example.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainPair<T> {
    /// Identifies the source clip and frame in error messages.
    pub label: String,
    pub image: Vec<T>,
    pub positive: Vec<T>,
    pub negative: Vec<T>,
}

impl<T: Scalar> TrainPair<T> {
    pub fn new(label: impl Into<String>, image: Vec<T>, positive: Vec<T>, negative: Vec<T>) -> Result<Self> {
        let d = image.len();
        for v in [&positive, &negative] {
            if v.len() != d {
                return Err(Error::Dimension {
                    expected: d,
                    got: v.len(),
                });
            }
        }
        Ok(Self {
            label: label.into(),
            image,
            positive,
            negative,
        })
    }

    pub fn dim(&self) -> usize {
        self.image.len()
    }
}
