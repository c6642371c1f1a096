#![allow(dead_code)]

pub mod gradcheck;
pub mod oracles;
pub mod reductions;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sdcda::nn::{self, Layer, Mode, NetworkSpec};
use sdcda::{ParameterSet, Tensor};

pub const H: f64 = 1e-5;
pub const REL_TOL: f64 = 1e-4;
/// Absolute slack for gradients that are zero up to rounding.
pub const ABS_FLOOR: f64 = 1e-8;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_tensor(rng: &mut impl Rng, shape: &[usize], scale: f64) -> Tensor {
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| rng.random_range(-scale..scale)).collect();
    Tensor::new(shape.to_vec(), data).unwrap()
}

/// Relative error with an absolute floor.
pub fn close(analytic: f64, numeric: f64) -> bool {
    let diff = (analytic - numeric).abs();
    diff <= REL_TOL * analytic.abs().max(numeric.abs()) || diff <= ABS_FLOOR
}

/// Central difference of `f` along every coordinate of `x`.
pub fn numeric_grad(x: &Tensor, mut f: impl FnMut(&Tensor) -> f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let mut plus = x.clone();
        plus.data_mut()[i] += H;
        let mut minus = x.clone();
        minus.data_mut()[i] -= H;
        out.push((f(&plus) - f(&minus)) / (2.0 * H));
    }
    out
}

pub fn assert_grad(label: &str, analytic: &[f64], numeric: &[f64]) {
    assert_eq!(analytic.len(), numeric.len(), "{label}: length");
    for (i, (a, n)) in analytic.iter().zip(numeric).enumerate() {
        assert!(close(*a, *n), "{label}[{i}]: analytic {a} vs numeric {n}");
    }
}

/// `sum(output * weights)` for a network with fixed dropout draws.
pub fn network_objective(
    spec: &NetworkSpec,
    params: &ParameterSet,
    input: &Tensor,
    weights: &Tensor,
    dropout_seed: u64,
) -> f64 {
    let (y, _) = nn::forward(spec, params, input, Mode::Train, &mut rng(dropout_seed)).unwrap();
    y.data().iter().zip(weights.data()).map(|(a, b)| a * b).sum()
}

/// Checks parameter and input gradients of `spec` against central differences.
pub fn check_network(spec: &NetworkSpec, seed: u64, batch: usize) {
    let mut r = rng(seed);
    let params = spec.init_params(&mut r);
    // perturb away from the zero-bias initialization
    let params = {
        let mut p = params;
        for (_, t) in p.iter_mut() {
            for v in t.data_mut() {
                *v += r.random_range(-0.1..0.1);
            }
        }
        p
    };
    let mut in_shape = vec![batch];
    in_shape.extend(&spec.input_shape);
    let input = random_tensor(&mut r, &in_shape, 1.0);
    let (y, cache) = nn::forward(spec, &params, &input, Mode::Train, &mut rng(seed + 1)).unwrap();
    let weights = random_tensor(&mut r, y.shape(), 1.0);
    let g = nn::backward(spec, &params, &cache, &weights).unwrap();

    let num_in = numeric_grad(&input, |x| network_objective(spec, &params, x, &weights, seed + 1));
    assert_grad("input", g.input.data(), &num_in);
    for (name, t) in params.iter() {
        let num = numeric_grad(t, |perturbed| {
            let mut p = params.clone();
            *p.get_mut(name).unwrap() = perturbed.clone();
            network_objective(spec, &p, &input, &weights, seed + 1)
        });
        assert_grad(name, g.params.get(name).unwrap().data(), &num);
    }
}

pub fn single_layer(input_shape: Vec<usize>, layer: Layer) -> NetworkSpec {
    NetworkSpec::new(input_shape, vec![layer]).unwrap()
}
