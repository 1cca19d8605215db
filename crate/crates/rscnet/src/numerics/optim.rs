//! SGD with classic momentum, L2 weight decay folded into the gradient,
//! and a per-step cosine-annealed learning rate.

use serde::{Deserialize, Serialize};

use crate::error::NumericsError;

use super::scalar::Scalar;
use super::tensor::Tensor;

/// Cosine-annealed learning rate: 0.5 * lr0 * (1 + cos(pi * step / total)).
pub fn cosine_lr(step: usize, total: usize, lr0: f64) -> Result<f64, NumericsError> {
    if total == 0 {
        return Err(NumericsError::ZeroTotalSteps);
    }
    debug_assert!(step <= total);
    let lr = 0.5 * lr0 * (1.0 + (std::f64::consts::PI * step as f64 / total as f64).cos());
    Ok(lr.max(0.0))
}

/// Optimizer state. Velocity buffers mirror parameter shapes exactly and
/// are kept in parameter visitation order.
#[derive(Clone, Serialize, Deserialize)]
pub struct OptimizerState<T: Scalar> {
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub velocity: Vec<Vec<T>>,
    pub step_index: usize,
    pub total_steps: usize,
}

impl<T: Scalar> OptimizerState<T> {
    pub fn new(learning_rate: f64, momentum: f64, weight_decay: f64, total_steps: usize) -> Self {
        OptimizerState {
            learning_rate,
            momentum,
            weight_decay,
            velocity: Vec::new(),
            step_index: 0,
            total_steps,
        }
    }

    /// Learning rate that the next `sgd_step` call will use.
    pub fn current_lr(&self) -> f64 {
        if self.total_steps == 0 {
            self.learning_rate
        } else {
            cosine_lr(self.step_index.min(self.total_steps), self.total_steps, self.learning_rate)
                .expect("total_steps > 0")
        }
    }
}

/// One SGD update over named parameter slots:
/// v <- mu * v + (g + wd * w); w <- w - lr * v.
///
/// Each slot is replaced with a fresh leaf tensor; the old tensors (and the
/// graph that produced their gradients) are released by the caller dropping
/// its loss handle.
pub fn sgd_step<T: Scalar>(
    state: &mut OptimizerState<T>,
    params: &mut [(String, &mut Tensor<T>)],
) -> Result<(), NumericsError> {
    if state.velocity.is_empty() {
        state.velocity = params
            .iter()
            .map(|(_, t)| vec![T::ZERO; t.len()])
            .collect();
    }
    if state.velocity.len() != params.len() {
        return Err(NumericsError::Invalid(format!(
            "sgd_step: optimizer holds {} velocity buffers for {} parameters",
            state.velocity.len(),
            params.len()
        )));
    }
    let lr = T::from_f64(state.current_lr());
    let mu = T::from_f64(state.momentum);
    let wd = T::from_f64(state.weight_decay);

    for ((name, slot), velocity) in params.iter_mut().zip(state.velocity.iter_mut()) {
        if velocity.len() != slot.len() {
            return Err(NumericsError::Invalid(format!(
                "sgd_step: velocity for '{name}' has {} entries, parameter has {}",
                velocity.len(),
                slot.len()
            )));
        }
        let updated = slot.with_grad(|grad| -> Result<Vec<T>, NumericsError> {
            let grad = grad.ok_or_else(|| NumericsError::Invalid(format!(
                "sgd_step: parameter '{name}' has no gradient; run backward first"
            )))?;
            if !grad.iter().all(|g| g.is_finite()) {
                return Err(NumericsError::NonFiniteGradient { name: name.clone() });
            }
            let w = slot.values();
            let mut next = vec![T::ZERO; w.len()];
            for i in 0..w.len() {
                let g = grad[i] + wd * w[i];
                velocity[i] = mu * velocity[i] + g;
                next[i] = w[i] - lr * velocity[i];
            }
            Ok(next)
        })?;
        **slot = Tensor::leaf(slot.shape().to_vec(), updated, true)?;
    }
    state.step_index += 1;
    Ok(())
}
