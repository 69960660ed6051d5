//! Focal loss on two-class logits.

use alloc::vec;
use alloc::vec::Vec;

#[cfg(not(feature = "std"))]
use num_traits::Float;

use super::{scalar, NnError, Scalar};

/// Guard under the logarithm.
pub const LOG_EPS: f64 = 1e-12;

/// Focusing and class-weight configuration.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FocalLossParams {
    /// Focusing exponent; 0 reduces to weighted cross-entropy.
    pub gamma: f64,
    /// Per-class weights, each in (0, 1), indexed by label.
    pub alpha: [f64; 2],
}

impl Default for FocalLossParams {
    fn default() -> Self {
        Self {
            gamma: 2.0,
            alpha: [0.5, 0.5],
        }
    }
}

impl FocalLossParams {
    /// Check the parameter ranges.
    pub fn validate(&self) -> Result<(), NnError> {
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(NnError::InvalidParam("focal gamma must be finite and >= 0"));
        }
        for &a in &self.alpha {
            if !(a > 0.0 && a < 1.0) {
                return Err(NnError::InvalidParam("focal alpha must lie in (0, 1)"));
            }
        }
        Ok(())
    }

    /// Class weights inversely proportional to training-class frequency,
    /// normalized to sum to one.
    pub fn alpha_from_counts(n0: usize, n1: usize) -> Result<[f64; 2], NnError> {
        if n0 == 0 {
            return Err(NnError::MissingClass { class: 0 });
        }
        if n1 == 0 {
            return Err(NnError::MissingClass { class: 1 });
        }
        let total = (n0 + n1) as f64;
        Ok([n1 as f64 / total, n0 as f64 / total])
    }
}

/// Numerically stable two-way softmax.
pub fn softmax2<T: Scalar>(z0: T, z1: T) -> [T; 2] {
    let m = z0.max(z1);
    let e0 = (z0 - m).exp();
    let e1 = (z1 - m).exp();
    let sum = e0 + e1;
    [e0 / sum, e1 / sum]
}

/// Mean focal loss over a batch and its analytic logit gradient.
///
/// `logits` is row-major `n x 2`; `labels[i]` in {0, 1}. Returns
/// `(loss, d loss / d logits)` with the gradient already divided by the
/// batch size.
pub fn focal_loss<T: Scalar>(
    logits: &[T],
    labels: &[usize],
    p: &FocalLossParams,
) -> Result<(T, Vec<T>), NnError> {
    p.validate()?;
    if logits.len() != labels.len() * 2 {
        return Err(NnError::LengthMismatch {
            left: logits.len(),
            right: labels.len() * 2,
        });
    }
    if labels.is_empty() {
        return Err(NnError::EmptyDataset);
    }
    let n = labels.len();
    let inv_n = 1.0 / n as f64;
    let eps = scalar::<T>(LOG_EPS);
    let gamma = p.gamma;

    let mut total = 0.0f64;
    let mut grad = vec![T::zero(); logits.len()];
    for (i, &label) in labels.iter().enumerate() {
        if label > 1 {
            return Err(NnError::LabelOutOfRange { index: i, label });
        }
        let probs = softmax2(logits[2 * i], logits[2 * i + 1]);
        let u = probs[label].to_f64().unwrap();
        let lu = probs[label].max(eps).to_f64().unwrap().ln();
        let om = (1.0 - u).max(0.0);
        let alpha = p.alpha[label];

        total += -alpha * om.powf(gamma) * lu * inv_n;

        // d/dz_j of -alpha (1-u)^g ln u, with u = softmax_y:
        //   alpha [g (1-u)^(g-1) u ln u - (1-u)^g] (delta_jy - p_j)
        let coef = if om == 0.0 {
            if gamma == 0.0 {
                -1.0
            } else {
                0.0
            }
        } else {
            gamma * om.powf(gamma - 1.0) * u * lu - om.powf(gamma)
        };
        for j in 0..2 {
            let delta = if j == label { 1.0 } else { 0.0 };
            let pj = probs[j].to_f64().unwrap();
            grad[2 * i + j] = scalar::<T>(alpha * coef * (delta - pj) * inv_n);
        }
    }
    let loss = scalar::<T>(total);
    if !loss.is_finite() {
        return Err(NnError::NonFinite { at: "loss" });
    }
    Ok((loss, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeedRng;

    /// Plain class-weighted cross-entropy, written independently.
    fn weighted_ce(logits: &[f64], labels: &[usize], alpha: [f64; 2]) -> (f64, Vec<f64>) {
        let n = labels.len();
        let mut loss = 0.0;
        let mut grad = vec![0.0; logits.len()];
        for (i, &y) in labels.iter().enumerate() {
            let p = softmax2(logits[2 * i], logits[2 * i + 1]);
            loss += -alpha[y] * p[y].max(1e-12).ln() / n as f64;
            for j in 0..2 {
                let delta = if j == y { 1.0 } else { 0.0 };
                grad[2 * i + j] = alpha[y] * (p[j] - delta) / n as f64;
            }
        }
        (loss, grad)
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let mut rng = SeedRng::new(2);
        for _ in 0..100 {
            let z0 = rng.uniform_in(-50.0, 50.0);
            let z1 = rng.uniform_in(-50.0, 50.0);
            let p = softmax2(z0, z1);
            assert!((p[0] + p[1] - 1.0).abs() < 1e-12);
            assert!(p[0] > 0.0 && p[1] > 0.0);
        }
        // Extreme logits stay finite.
        let p = softmax2(1000.0f64, -1000.0);
        assert!((p[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_gamma_reduces_to_cross_entropy() {
        let mut rng = SeedRng::new(8);
        let logits: Vec<f64> = (0..12).map(|_| rng.uniform_in(-3.0, 3.0)).collect();
        let labels = [0usize, 1, 1, 0, 1, 0];
        let p = FocalLossParams {
            gamma: 0.0,
            alpha: [0.3, 0.7],
        };
        let (loss, grad) = focal_loss(&logits, &labels, &p).unwrap();
        let (ce_loss, ce_grad) = weighted_ce(&logits, &labels, p.alpha);
        assert!((loss - ce_loss).abs() < 1e-12);
        for (g, c) in grad.iter().zip(&ce_grad) {
            assert!((g - c).abs() < 1e-10);
        }
    }

    #[test]
    fn hand_evaluated_example() {
        // Equal logits, label 0, gamma 2: -(1/2)^2 ln(1/2).
        let p = FocalLossParams {
            gamma: 2.0,
            alpha: [0.5, 0.5],
        };
        // alpha must be in (0,1); the stated example uses alpha=1, so use
        // alpha=0.5 and double.
        let (loss, _) = focal_loss(&[0.0f64, 0.0], &[0], &p).unwrap();
        let want = 0.25 * core::f64::consts::LN_2;
        assert!((2.0 * loss - want).abs() < 1e-6, "got {}", 2.0 * loss);
        assert!((2.0 * loss - 0.17329).abs() < 1e-5);
    }

    #[test]
    fn confident_correct_prediction_has_vanishing_loss() {
        let p = FocalLossParams::default();
        let (loss, grad) = focal_loss(&[30.0f64, -30.0], &[0], &p).unwrap();
        assert!(loss < 1e-12, "loss {loss}");
        for g in grad {
            assert!(g.abs() < 1e-10);
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = SeedRng::new(14);
        for &gamma in &[0.0, 0.5, 1.0, 2.0, 3.0] {
            let p = FocalLossParams {
                gamma,
                alpha: [0.25, 0.75],
            };
            let mut logits: Vec<f64> = (0..8).map(|_| rng.uniform_in(-2.0, 2.0)).collect();
            let labels = [1usize, 0, 1, 1];
            let (_, grad) = focal_loss(&logits, &labels, &p).unwrap();
            let h = 1e-6;
            for i in 0..logits.len() {
                let orig = logits[i];
                logits[i] = orig + h;
                let (hi, _) = focal_loss(&logits, &labels, &p).unwrap();
                logits[i] = orig - h;
                let (lo, _) = focal_loss(&logits, &labels, &p).unwrap();
                logits[i] = orig;
                let numeric = (hi - lo) / (2.0 * h);
                let denom = grad[i].abs().max(numeric.abs()).max(1e-6);
                assert!(
                    ((grad[i] - numeric) / denom).abs() < 1e-4,
                    "gamma {gamma} logit {i}: analytic {} numeric {}",
                    grad[i],
                    numeric
                );
            }
        }
    }

    #[test]
    fn alpha_tracks_inverse_class_frequency() {
        let a = FocalLossParams::alpha_from_counts(90, 10).unwrap();
        assert!((a[0] - 0.1).abs() < 1e-15);
        assert!((a[1] - 0.9).abs() < 1e-15);
        assert!(FocalLossParams::alpha_from_counts(5, 0).is_err());
        let p = FocalLossParams {
            gamma: 2.0,
            alpha: a,
        };
        assert!(p.validate().is_ok());
    }

    #[test]
    fn input_validation() {
        let p = FocalLossParams::default();
        assert!(matches!(
            focal_loss(&[0.0, 0.0, 0.0], &[0], &p),
            Err(NnError::LengthMismatch { .. })
        ));
        assert!(matches!(
            focal_loss::<f64>(&[], &[], &p),
            Err(NnError::EmptyDataset)
        ));
        assert!(matches!(
            focal_loss(&[0.0, 0.0], &[2], &p),
            Err(NnError::LabelOutOfRange { .. })
        ));
        let bad = FocalLossParams {
            gamma: -1.0,
            alpha: [0.5, 0.5],
        };
        assert!(bad.validate().is_err());
    }
}
