//! Shared helpers for the oracle-based test suites.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rscnet::numerics::reference::{finite_difference_grad, relative_error};
use rscnet::numerics::{backward, sum_all, Tensor};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_values(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}

pub fn leaf(shape: &[usize], values: &[f64]) -> Tensor<f64> {
    Tensor::leaf(shape.to_vec(), values.to_vec(), true).unwrap()
}

/// Reduce an arbitrary-shape op output to a scalar with fixed random
/// weights so every output coordinate influences the loss.
pub fn weighted_sum(out: &Tensor<f64>, weights: &[f64]) -> Tensor<f64> {
    let w = Tensor::new(out.shape().to_vec(), weights.to_vec()).unwrap();
    sum_all(&out.mul(&w).unwrap()).unwrap()
}

/// Compare analytic gradients of `loss_fn` against central finite
/// differences for every input tensor, coordinate by coordinate.
///
/// `loss_fn` receives leaf tensors built from `inputs` and must return a
/// scalar tensor.
pub fn check_gradients(
    name: &str,
    inputs: &[(Vec<usize>, Vec<f64>)],
    loss_fn: &dyn Fn(&[Tensor<f64>]) -> Tensor<f64>,
    tolerance: f64,
) {
    let leaves: Vec<Tensor<f64>> = inputs
        .iter()
        .map(|(shape, values)| leaf(shape, values))
        .collect();
    let loss = loss_fn(&leaves);
    backward(&loss).unwrap();

    for (idx, (shape, values)) in inputs.iter().enumerate() {
        let analytic = leaves[idx]
            .grad()
            .unwrap_or_else(|| panic!("{name}: input {idx} got no gradient"));
        let numeric = finite_difference_grad(
            values,
            |probe| {
                let rebuilt: Vec<Tensor<f64>> = inputs
                    .iter()
                    .enumerate()
                    .map(|(j, (s, v))| {
                        if j == idx {
                            leaf(s, probe)
                        } else {
                            leaf(s, v)
                        }
                    })
                    .collect();
                loss_fn(&rebuilt).item()
            },
            1e-5,
        );
        for (coord, (&a, &n)) in analytic.iter().zip(&numeric).enumerate() {
            let err = relative_error(a, n);
            assert!(
                err < tolerance,
                "{name}: input {idx} coord {coord} (shape {shape:?}): analytic {a:.6e} vs numeric {n:.6e}, rel err {err:.3e}"
            );
        }
    }
}
