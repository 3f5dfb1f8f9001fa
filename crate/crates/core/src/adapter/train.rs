use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::loss::{grad_adapted, loss_terms};
use super::{AdapterParams, TrainPair};
use crate::scalar::Scalar;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
    /// One pair per keyframe rather than one per clip.
    pub per_keyframe: bool,
    pub epsilon_norm: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-2,
            epochs: 1,
            seed: 0,
            per_keyframe: true,
            epsilon_norm: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome<T> {
    pub params: AdapterParams<T>,
    /// Mean loss over the steps of each epoch.
    pub loss_trace: Vec<f64>,
}

/// One in-place SGD update on a single pair; returns the pre-step loss.
pub fn sgd_step<T: Scalar>(params: &mut AdapterParams<T>, pair: &TrainPair<T>, learning_rate: T, epsilon: T) -> Result<T> {
    let terms = loss_terms(params, pair, epsilon)?;
    let g = grad_adapted(&terms, pair, epsilon);
    let d = params.dim;
    for (i, &gi) in g.iter().enumerate() {
        let step = learning_rate * gi;
        for (w, &ej) in params.weight[i * d..(i + 1) * d].iter_mut().zip(&pair.image) {
            *w -= step * ej;
        }
        params.bias[i] -= step;
    }
    Ok(terms.loss)
}

/// Plain SGD over `pairs` in a seeded shuffled order, `epochs` passes,
/// starting from the identity adapter.
pub fn train<T: Scalar>(pairs: &[TrainPair<T>], config: &TrainConfig) -> Result<TrainOutcome<T>> {
    if pairs.is_empty() {
        return Err(Error::InvalidArgument("no training pairs".into()));
    }
    if !(config.learning_rate > 0.0) || !config.learning_rate.is_finite() {
        return Err(Error::InvalidArgument("learning rate must be positive".into()));
    }
    let dim = pairs[0].dim();
    let mut params = AdapterParams::zeros(dim);
    let lr = T::from_f64_rounded(config.learning_rate);
    let eps = T::from_f64_rounded(config.epsilon_norm);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    let mut trace = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0f64;
        for (step, &i) in order.iter().enumerate() {
            let loss = match sgd_step(&mut params, &pairs[i], lr, eps) {
                Ok(l) => l,
                Err(Error::Numerical { .. }) => {
                    return Err(Error::Diverged { epoch, step, trace });
                }
                Err(e) => return Err(e),
            };
            total += loss.to_f64_lossless();
        }
        let mean = total / pairs.len() as f64;
        if !mean.is_finite() || params.weight.iter().chain(&params.bias).any(|x| !x.is_finite()) {
            trace.push(mean);
            return Err(Error::Diverged {
                epoch,
                step: pairs.len(),
                trace,
            });
        }
        trace.push(mean);
    }
    Ok(TrainOutcome {
        params,
        loss_trace: trace,
    })
}

/// Mean loss over `pairs` under `params`.
pub fn mean_loss<T: Scalar>(params: &AdapterParams<T>, pairs: &[TrainPair<T>], epsilon: T) -> Result<f64> {
    let mut total = 0.0;
    for p in pairs {
        total += loss_terms(params, p, epsilon)?.loss.to_f64_lossless();
    }
    Ok(total / pairs.len().max(1) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_pairs() -> Vec<TrainPair<f64>> {
        (0..6)
            .map(|i| {
                let s = if i % 2 == 0 { 1.0 } else { -1.0 };
                TrainPair::new(format!("p{i}"), vec![0.1 * s, 0.2], vec![s, 0.0], vec![-s, 0.0]).unwrap()
            })
            .collect()
    }

    #[test]
    fn zero_epochs_is_identity() {
        let out = train(&toy_pairs(), &TrainConfig { epochs: 0, ..Default::default() }).unwrap();
        assert!(out.params.is_identity());
        assert!(out.loss_trace.is_empty());
    }

    #[test]
    fn deterministic_for_a_seed() {
        let cfg = TrainConfig { epochs: 3, seed: 5, ..Default::default() };
        let a = train(&toy_pairs(), &cfg).unwrap();
        let b = train(&toy_pairs(), &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.loss_trace.len(), 3);
    }

    #[test]
    fn empty_pairs_rejected() {
        assert!(train::<f64>(&[], &TrainConfig::default()).is_err());
    }

    #[test]
    fn huge_learning_rate_diverges_with_trace() {
        let cfg = TrainConfig { learning_rate: 1e300, epochs: 5, ..Default::default() };
        match train(&toy_pairs(), &cfg) {
            Err(Error::Diverged { .. }) => {}
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn training_reduces_loss() {
        let pairs = toy_pairs();
        let cfg = TrainConfig { learning_rate: 0.1, epochs: 5, ..Default::default() };
        let out = train(&pairs, &cfg).unwrap();
        let before = mean_loss(&AdapterParams::zeros(2), &pairs, 1e-8).unwrap();
        let after = mean_loss(&out.params, &pairs, 1e-8).unwrap();
        assert!(after < before, "{after} !< {before}");
    }
}
