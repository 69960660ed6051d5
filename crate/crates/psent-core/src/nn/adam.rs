//! Adam optimizer with bias-corrected moments.

use alloc::vec;
use alloc::vec::Vec;


use super::tensor::{NamedTensor, TensorRole};
use super::{scalar, NnError, Scalar};

/// Step-size and moment-decay settings.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    /// Learning rate.
    pub lr: f64,
    /// First-moment decay.
    pub beta1: f64,
    /// Second-moment decay.
    pub beta2: f64,
    /// Added outside the square root.
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-6,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    /// Check the parameter ranges.
    pub fn validate(&self) -> Result<(), NnError> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(NnError::InvalidParam("learning rate must be positive"));
        }
        for &b in &[self.beta1, self.beta2] {
            if !(0.0..1.0).contains(&b) {
                return Err(NnError::InvalidParam("adam betas must lie in [0, 1)"));
            }
        }
        // NaN must fail this guard too.
        #[allow(clippy::neg_cmp_op_on_partial_ord)]
        if !(self.eps > 0.0) {
            return Err(NnError::InvalidParam("adam epsilon must be positive"));
        }
        Ok(())
    }
}

struct Slot<T> {
    m: Vec<T>,
    v: Vec<T>,
}

/// Optimizer state: one moment pair per trainable tensor, in visitation
/// order.
pub struct AdamState<T> {
    cfg: AdamConfig,
    step: u64,
    slots: Vec<Slot<T>>,
}

impl<T: Scalar> AdamState<T> {
    /// Fresh state.
    pub fn new(cfg: AdamConfig) -> Result<Self, NnError> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            step: 0,
            slots: Vec::new(),
        })
    }

    /// Steps taken so far.
    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Apply one update from the accumulated gradients. Frozen tensors and
    /// buffers are left untouched; moment slots stay aligned with the
    /// trainable tensor order across calls.
    pub fn step(&mut self, tensors: &mut [NamedTensor<'_, T>]) -> Result<(), NnError> {
        let trainable: Vec<&mut NamedTensor<'_, T>> = tensors
            .iter_mut()
            .filter(|t| t.role == TensorRole::Trainable)
            .collect();
        if self.slots.is_empty() {
            self.slots = trainable
                .iter()
                .map(|t| Slot {
                    m: vec![T::zero(); t.param.len()],
                    v: vec![T::zero(); t.param.len()],
                })
                .collect();
        }
        if self.slots.len() != trainable.len() {
            return Err(NnError::LengthMismatch {
                left: self.slots.len(),
                right: trainable.len(),
            });
        }

        self.step += 1;
        let t = self.step as i32;
        let b1 = scalar::<T>(self.cfg.beta1);
        let b2 = scalar::<T>(self.cfg.beta2);
        let one = T::one();
        let bc1 = one - b1.powi(t);
        let bc2 = one - b2.powi(t);
        let lr = scalar::<T>(self.cfg.lr);
        let eps = scalar::<T>(self.cfg.eps);

        for (slot, tensor) in self.slots.iter_mut().zip(trainable) {
            if slot.m.len() != tensor.param.len() {
                return Err(NnError::LengthMismatch {
                    left: slot.m.len(),
                    right: tensor.param.len(),
                });
            }
            if tensor.param.is_frozen() {
                continue;
            }
            let grads: Vec<T> = tensor.param.grad().to_vec();
            let values = tensor.param.values_mut();
            for i in 0..values.len() {
                let g = grads[i];
                slot.m[i] = b1 * slot.m[i] + (one - b1) * g;
                slot.v[i] = b2 * slot.v[i] + (one - b2) * g * g;
                let m_hat = slot.m[i] / bc1;
                let v_hat = slot.v[i] / bc2;
                values[i] = values[i] - lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}
