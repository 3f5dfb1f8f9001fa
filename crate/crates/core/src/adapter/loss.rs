//! Two-way contrastive loss and its analytic gradient.
//!
//! With `a = A(e)` and `d± = max(‖a − t±‖, ε)`:
//!
//! ```text
//! L = log(exp(d⁺) / (exp(d⁺) + exp(d⁻))) = d⁺ − logsumexp(d⁺, d⁻)
//! ∂L/∂d⁺ = s,  ∂L/∂d⁻ = −s,  s = exp(d⁻) / (exp(d⁺) + exp(d⁻))
//! ∂L/∂a  = s · (u⁺ − u⁻),    u± = (a − t±) / d±  (zero when ‖a − t±‖ ≤ ε)
//! ∂L/∂W  = (∂L/∂a) ⊗ e,      ∂L/∂b = ∂L/∂a
//! ```

use super::{AdapterParams, TrainPair};
use crate::scalar::Scalar;
use crate::{Error, Result};

/// Forward-pass quantities of one pair.
#[derive(Debug, Clone, PartialEq)]
pub struct LossTerms<T> {
    pub adapted: Vec<T>,
    /// Raw distances before the ε floor.
    pub raw_positive: T,
    pub raw_negative: T,
    pub d_positive: T,
    pub d_negative: T,
    pub loss: T,
    /// `exp(d⁻) / (exp(d⁺) + exp(d⁻))`.
    pub weight_negative: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdapterGrad<T> {
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

fn distance<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| (x - y) * (x - y)).sum::<T>().sqrt()
}

fn check_dims<T: Scalar>(params: &AdapterParams<T>, pair: &TrainPair<T>) -> Result<()> {
    for v in [&pair.image, &pair.positive, &pair.negative] {
        if v.len() != params.dim {
            return Err(Error::Dimension {
                expected: params.dim,
                got: v.len(),
            });
        }
    }
    Ok(())
}

pub fn loss_terms<T: Scalar>(params: &AdapterParams<T>, pair: &TrainPair<T>, epsilon: T) -> Result<LossTerms<T>> {
    check_dims(params, pair)?;
    let adapted = params.apply(&pair.image)?;
    let raw_positive = distance(&adapted, &pair.positive);
    let raw_negative = distance(&adapted, &pair.negative);
    let d_positive = raw_positive.max(epsilon);
    let d_negative = raw_negative.max(epsilon);

    // log-sum-exp form: never exponentiates a positive number
    let gap = d_negative - d_positive;
    let loss = -softplus(gap);
    let weight_negative = sigmoid(gap);

    if !loss.is_finite() || !weight_negative.is_finite() || adapted.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numerical {
            context: format!("pair `{}`", pair.label),
            message: format!("non-finite loss (d+ = {d_positive}, d- = {d_negative})"),
        });
    }
    Ok(LossTerms {
        adapted,
        raw_positive,
        raw_negative,
        d_positive,
        d_negative,
        loss,
        weight_negative,
    })
}

/// `log(α⁺ / (α⁺ + α⁻))` with `α± = exp(d±)`; always negative.
pub fn infonce_loss<T: Scalar>(params: &AdapterParams<T>, pair: &TrainPair<T>, epsilon: T) -> Result<T> {
    Ok(loss_terms(params, pair, epsilon)?.loss)
}

/// Gradient of the loss with respect to the adapted embedding.
pub(crate) fn grad_adapted<T: Scalar>(terms: &LossTerms<T>, pair: &TrainPair<T>, epsilon: T) -> Vec<T> {
    let s = terms.weight_negative;
    let coef_pos = if terms.raw_positive > epsilon { s / terms.d_positive } else { T::zero() };
    let coef_neg = if terms.raw_negative > epsilon { s / terms.d_negative } else { T::zero() };
    terms
        .adapted
        .iter()
        .zip(&pair.positive)
        .zip(&pair.negative)
        .map(|((&a, &tp), &tn)| coef_pos * (a - tp) - coef_neg * (a - tn))
        .collect()
}

pub fn gradient<T: Scalar>(params: &AdapterParams<T>, pair: &TrainPair<T>, epsilon: T) -> Result<AdapterGrad<T>> {
    let terms = loss_terms(params, pair, epsilon)?;
    let g = grad_adapted(&terms, pair, epsilon);
    let mut weight = Vec::with_capacity(params.dim * params.dim);
    for &gi in &g {
        weight.extend(pair.image.iter().map(|&ej| gi * ej));
    }
    Ok(AdapterGrad { weight, bias: g })
}

/// `ln(1 + exp(x))` without overflow.
fn softplus<T: Scalar>(x: T) -> T {
    if x > T::zero() {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// `1 / (1 + exp(−x))` without overflow.
fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let z = x.exp();
        z / (T::one() + z)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const EPS: f64 = 1e-8;

    fn pair(e: Vec<f64>, tp: Vec<f64>, tn: Vec<f64>) -> TrainPair<f64> {
        TrainPair::new("t", e, tp, tn).unwrap()
    }

    #[test]
    fn equidistant_gives_log_half() {
        let p = pair(vec![0.0, 0.0], vec![1.0, 0.0], vec![-1.0, 0.0]);
        let l = infonce_loss(&AdapterParams::zeros(2), &p, EPS).unwrap();
        assert!((l - 0.5f64.ln()).abs() < 1e-12);
        assert!((l - -0.693147).abs() < 1e-6);
    }

    #[test]
    fn at_positive_with_negative_ln3_away() {
        let p = pair(vec![0.0, 0.0], vec![0.0, 0.0], vec![3f64.ln(), 0.0]);
        let l = infonce_loss(&AdapterParams::zeros(2), &p, EPS).unwrap();
        // α⁺ = e^ε ≈ 1, α⁻ = 3
        let expect = (EPS.exp() / (EPS.exp() + 3.0)).ln();
        assert!((l - expect).abs() < 1e-12);
        assert!((l - -1.386294).abs() < 1e-6);
    }

    #[test]
    fn coincident_positive_only_pushes_from_negative() {
        let p = pair(vec![0.5, 0.5], vec![0.5, 0.5], vec![1.5, 0.5]);
        let g = gradient(&AdapterParams::zeros(2), &p, EPS).unwrap();
        // u⁺ = 0, u⁻ = (a − t⁻)/d⁻ = (−1, 0); g = −s·u⁻ points towards the negative,
        // so a descent step moves away from it
        assert!(g.bias[0] > 0.0);
        assert_eq!(g.bias[1], 0.0);
    }

    #[test]
    fn no_overflow_for_large_distances() {
        // close to the positive: L ≈ d⁺ − d⁻
        let p = pair(vec![0.0], vec![1e4], vec![-2e4]);
        let t = loss_terms(&AdapterParams::zeros(1), &p, EPS).unwrap();
        assert!((t.loss - -1e4).abs() < 1e-6);
        // close to the negative: L → 0⁻
        let p = pair(vec![0.0], vec![2e4], vec![-1e4]);
        let t = loss_terms(&AdapterParams::zeros(1), &p, EPS).unwrap();
        assert!(t.loss <= 0.0 && t.loss > -1e-12);
        assert!((t.weight_negative - 0.0).abs() < 1e-12);
    }

    #[test]
    fn non_finite_input_names_the_pair() {
        let p = TrainPair::new("clip7#3", vec![f64::INFINITY], vec![0.0], vec![1.0]).unwrap();
        let err = infonce_loss(&AdapterParams::zeros(1), &p, EPS).unwrap_err().to_string();
        assert!(err.contains("clip7#3"), "{err}");
    }

    #[test]
    fn softplus_and_sigmoid_agree_with_naive_forms() {
        for x in [-5.0f64, -0.3, 0.0, 0.7, 4.0] {
            assert!((softplus(x) - (1.0 + x.exp()).ln()).abs() < 1e-12);
            assert!((sigmoid(x) - 1.0 / (1.0 + (-x).exp())).abs() < 1e-12);
        }
    }
}
