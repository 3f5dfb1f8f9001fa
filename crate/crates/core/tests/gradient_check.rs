//! Analytic gradient of the contrastive loss against central differences.

use listener_core::adapter::{gradient, infonce_loss, sgd_step, AdapterParams, TrainPair};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const EPS_NORM: f64 = 1e-8;
const STEP: f64 = 1e-5;

fn random_vec(rng: &mut ChaCha8Rng, d: usize, scale: f64) -> Vec<f64> {
    (0..d).map(|_| rng.gen_range(-scale..scale)).collect()
}

fn draw(rng: &mut ChaCha8Rng, d: usize) -> (AdapterParams<f64>, TrainPair<f64>) {
    let params = AdapterParams::from_parts(d, random_vec(rng, d * d, 0.3), random_vec(rng, d, 0.3)).unwrap();
    let pair = TrainPair::new(
        "draw",
        random_vec(rng, d, 1.0),
        random_vec(rng, d, 1.0),
        random_vec(rng, d, 1.0),
    )
    .unwrap();
    (params, pair)
}

/// Central-difference gradient over every weight and bias entry.
fn finite_difference(params: &AdapterParams<f64>, pair: &TrainPair<f64>) -> Vec<f64> {
    let n_w = params.weight.len();
    (0..params.n_params())
        .map(|k| {
            let mut plus = params.clone();
            let mut minus = params.clone();
            if k < n_w {
                plus.weight[k] += STEP;
                minus.weight[k] -= STEP;
            } else {
                plus.bias[k - n_w] += STEP;
                minus.bias[k - n_w] -= STEP;
            }
            let lp = infonce_loss(&plus, pair, EPS_NORM).unwrap();
            let lm = infonce_loss(&minus, pair, EPS_NORM).unwrap();
            (lp - lm) / (2.0 * STEP)
        })
        .collect()
}

/// `max |a − n| / max(|a|, |n|, floor)` over all coordinates.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let scale = analytic
        .iter()
        .chain(numeric)
        .fold(0.0f64, |m, x| m.max(x.abs()))
        .max(1e-8);
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / scale)
        .fold(0.0, f64::max)
}

#[test]
fn analytic_matches_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for &d in &[2usize, 8, 32] {
        for _ in 0..100 {
            let (params, pair) = draw(&mut rng, d);
            let g = gradient(&params, &pair, EPS_NORM).unwrap();
            let analytic: Vec<f64> = g.weight.iter().chain(&g.bias).copied().collect();
            let numeric = finite_difference(&params, &pair);
            let err = max_relative_error(&analytic, &numeric);
            assert!(err <= 1e-4, "d={d}: relative error {err}");
        }
    }
}

#[test]
fn symmetric_configuration_matches_differences() {
    // d⁺ = d⁻ with u⁺ = −u⁻: e at the midpoint of the two texts
    let pair = TrainPair::new("mid", vec![0.0, 0.0], vec![1.0, 0.0], vec![-1.0, 0.0]).unwrap();
    let params = AdapterParams::zeros(2);
    let g = gradient(&params, &pair, EPS_NORM).unwrap();
    let analytic: Vec<f64> = g.weight.iter().chain(&g.bias).copied().collect();
    assert!(max_relative_error(&analytic, &finite_difference(&params, &pair)) <= 1e-4);
    // s = 1/2, u⁺ = (−1, 0), u⁻ = (1, 0): ∂L/∂a = ½(u⁺ − u⁻) = (−1, 0)
    assert!((g.bias[0] - -1.0).abs() < 1e-12 && g.bias[1].abs() < 1e-12);
}

#[test]
fn loss_bounds_over_random_pairs() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..1000 {
        let (params, pair) = draw(&mut rng, 6);
        let terms = listener_core::adapter::loss_terms(&params, &pair, EPS_NORM).unwrap();
        assert!(terms.loss < 0.0);
        assert!(terms.loss > -terms.d_negative - std::f64::consts::LN_2);
    }
}

#[test]
fn small_sgd_step_does_not_increase_loss() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for _ in 0..200 {
        let d = rng.gen_range(2..10);
        let (mut params, pair) = draw(&mut rng, d);
        let before = infonce_loss(&params, &pair, EPS_NORM).unwrap();
        sgd_step(&mut params, &pair, 1e-4, EPS_NORM).unwrap();
        let after = infonce_loss(&params, &pair, EPS_NORM).unwrap();
        assert!(after <= before, "{after} > {before}");
    }
}

#[test]
fn f32_gradient_tracks_f64() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (params, pair) = draw(&mut rng, 8);
    let g64 = gradient(&params, &pair, EPS_NORM).unwrap();
    let p32: AdapterParams<f32> = params.cast();
    let pair32 = TrainPair::new(
        "f32",
        pair.image.iter().map(|&x| x as f32).collect(),
        pair.positive.iter().map(|&x| x as f32).collect(),
        pair.negative.iter().map(|&x| x as f32).collect(),
    )
    .unwrap();
    let g32 = gradient(&p32, &pair32, 1e-8).unwrap();
    for (a, b) in g64.bias.iter().zip(&g32.bias) {
        assert!((a - *b as f64).abs() < 1e-4);
    }
}
