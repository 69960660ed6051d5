//! Finite-difference verification of the analytic gradients.

use alloc::string::String;
use alloc::vec::Vec;


use super::layers::{BatchNorm, Conv2d, Dense, SeBlock};
use super::loss::{focal_loss, FocalLossParams};
use super::model::{BasicBlock, SEResNet18};
use super::tensor::{Tensor4, TensorRole};
use super::NnError;
use crate::rng::SeedRng;

/// Central-difference step. At double precision this balances truncation
/// against roundoff for unit-scale activations; very deep compositions can
/// still show O(1e-4) truncation where third derivatives are large.
pub const FD_STEP: f64 = 1e-5;

/// Outcome of one gradient check.
#[derive(Clone, Debug)]
pub struct GradCheckReport {
    /// Largest relative error over all checked elements.
    pub worst: f64,
    /// Largest relative error per tensor, in visitation order.
    pub per_tensor: Vec<(String, f64)>,
}

/// Compare analytic parameter gradients of the focal-loss objective against
/// central finite differences at double precision.
///
/// `sample_per_tensor` bounds how many elements of each tensor are checked
/// (`None` checks all); sampled indices are drawn from `seed`. Buffers and
/// frozen tensors are asserted to hold exactly zero gradient instead.
pub fn gradient_check(
    model: &mut SEResNet18<f64>,
    x: &Tensor4<f64>,
    labels: &[usize],
    fl: &FocalLossParams,
    sample_per_tensor: Option<usize>,
    seed: u64,
) -> Result<GradCheckReport, NnError> {
    let loss_of = |model: &mut SEResNet18<f64>| -> Result<f64, NnError> {
        let (logits, _) = model.forward_train(x)?;
        let (loss, _) = focal_loss(&logits, labels, fl)?;
        Ok(loss)
    };

    // Analytic pass.
    model.zero_grad();
    let (logits, cache) = model.forward_train(x)?;
    let (_, dlogits) = focal_loss(&logits, labels, fl)?;
    model.backward(&cache, &dlogits)?;

    // Snapshot gradients and buffer values; finite differencing perturbs
    // parameters and lets training-mode batch normalization update running
    // stats, both restored afterwards.
    let grads: Vec<(String, TensorRole, bool, Vec<f64>)> = model
        .tensors_mut()
        .iter()
        .map(|t| {
            (
                t.name.clone(),
                t.role,
                t.param.is_frozen(),
                t.param.grad().to_vec(),
            )
        })
        .collect();
    let buffer_snapshot: Vec<Vec<f64>> = model
        .tensors_mut()
        .iter()
        .filter(|t| t.role == TensorRole::Buffer)
        .map(|t| t.param.values().to_vec())
        .collect();

    let mut rng = SeedRng::new(seed);
    let mut per_tensor = Vec::new();
    let mut worst = 0.0f64;
    for (ti, (name, role, frozen, analytic)) in grads.iter().enumerate() {
        if *role == TensorRole::Buffer || *frozen {
            if analytic.iter().any(|&g| g != 0.0) {
                return Err(NnError::NonFinite {
                    at: "excluded tensor reported a nonzero gradient",
                });
            }
            continue;
        }
        let len = analytic.len();
        let indices: Vec<usize> = match sample_per_tensor {
            Some(k) if k < len => (0..k).map(|_| rng.index(len)).collect(),
            _ => (0..len).collect(),
        };
        let mut tensor_worst = 0.0f64;
        for &i in &indices {
            let orig = model.tensors_mut()[ti].param.values()[i];
            model.tensors_mut()[ti].param.values_mut()[i] = orig + FD_STEP;
            let hi = loss_of(model)?;
            model.tensors_mut()[ti].param.values_mut()[i] = orig - FD_STEP;
            let lo = loss_of(model)?;
            model.tensors_mut()[ti].param.values_mut()[i] = orig;
            let numeric = (hi - lo) / (2.0 * FD_STEP);
            let a = analytic[i];
            let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
            tensor_worst = tensor_worst.max(err);
        }
        worst = worst.max(tensor_worst);
        per_tensor.push((name.clone(), tensor_worst));
    }

    // Restore buffers mutated by the finite-difference forwards.
    let mut bi = 0;
    for t in model.tensors_mut() {
        if t.role == TensorRole::Buffer {
            t.param.values_mut().copy_from_slice(&buffer_snapshot[bi]);
            bi += 1;
        }
    }
    model.zero_grad();

    Ok(GradCheckReport { worst, per_tensor })
}

/// Worst relative gradient error observed for one layer type.
#[derive(Clone, Copy, Debug)]
pub struct LayerCheck {
    /// Layer family: "conv", "norm", "dense", "se", "residual" or "focal".
    pub layer: &'static str,
    /// Largest relative error over all parameter and input elements.
    pub max_rel_err: f64,
}

fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-6)
}

/// Probe loss: elementwise product with a fixed random tensor, summed.
/// Its gradient with respect to the layer output is the probe itself.
fn probe_loss(y: &[f64], probe: &[f64]) -> f64 {
    y.iter().zip(probe).map(|(a, b)| a * b).sum()
}

fn fd_param(
    analytic: &[f64],
    mut loss_at: impl FnMut(usize, f64) -> Result<f64, NnError>,
) -> Result<f64, NnError> {
    let mut worst = 0.0f64;
    for (i, &a) in analytic.iter().enumerate() {
        let hi = loss_at(i, FD_STEP)?;
        let lo = loss_at(i, -FD_STEP)?;
        worst = worst.max(rel_err(a, (hi - lo) / (2.0 * FD_STEP)));
    }
    Ok(worst)
}

fn rand4(n: usize, c: usize, h: usize, w: usize, rng: &mut SeedRng) -> Tensor4<f64> {
    Tensor4::new(n, c, h, w, (0..n * c * h * w).map(|_| rng.normal()).collect())
        .expect("shape matches value count")
}

/// Check every layer family in isolation against central finite differences
/// at double precision: convolution, batch normalization, dense, SE gate, a
/// full residual block with projection shortcut, and the focal loss. Both
/// parameter and input gradients are differenced. Isolated layers keep the
/// objective's curvature small, so the comparison stays well inside the
/// truncation budget of `FD_STEP`.
pub fn check_layer_gradients(seed: u64) -> Result<Vec<LayerCheck>, NnError> {
    let mut out = Vec::new();

    // Strided, padded convolution.
    {
        let mut rng = SeedRng::with_stream(seed, 1);
        let mut conv = Conv2d::<f64>::new(3, 4, 3, 2, 1, &mut rng);
        let x = rand4(2, 3, 6, 6, &mut rng);
        let y = conv.forward(&x)?;
        let probe: Vec<f64> = (0..y.values.len()).map(|_| rng.normal()).collect();
        let dy = Tensor4::new(y.n, y.c, y.h, y.w, probe.clone())?;
        conv.weight.zero_grad();
        let dx = conv.backward(&x, &dy);
        let analytic_w = conv.weight.grad().to_vec();
        let mut err = fd_param(&analytic_w, |i, h| {
            let orig = conv.weight.values()[i];
            conv.weight.values_mut()[i] = orig + h;
            let loss = probe_loss(&conv.forward(&x)?.values, &probe);
            conv.weight.values_mut()[i] = orig;
            Ok(loss)
        })?;
        let mut xm = x.clone();
        err = err.max(fd_param(&dx.values, |i, h| {
            let orig = xm.values[i];
            xm.values[i] = orig + h;
            let loss = probe_loss(&conv.forward(&xm)?.values, &probe);
            xm.values[i] = orig;
            Ok(loss)
        })?);
        out.push(LayerCheck {
            layer: "conv",
            max_rel_err: err,
        });
    }

    // Batch normalization in training mode. The probe loss never reads the
    // running averages, so their drift across repeated forwards is harmless.
    {
        let mut rng = SeedRng::with_stream(seed, 2);
        let mut bn = BatchNorm::<f64>::new(3);
        for g in bn.gamma.values_mut() {
            *g = 1.0 + 0.3 * rng.normal();
        }
        for b in bn.beta.values_mut() {
            *b = 0.3 * rng.normal();
        }
        let x = rand4(2, 3, 4, 4, &mut rng);
        let (y, stats) = bn.forward_train(&x)?;
        let probe: Vec<f64> = (0..y.values.len()).map(|_| rng.normal()).collect();
        let dy = Tensor4::new(y.n, y.c, y.h, y.w, probe.clone())?;
        bn.gamma.zero_grad();
        bn.beta.zero_grad();
        let dx = bn.backward(&x, &stats, &dy);
        let d_gamma = bn.gamma.grad().to_vec();
        let d_beta = bn.beta.grad().to_vec();
        let mut err = fd_param(&d_gamma, |i, h| {
            let orig = bn.gamma.values()[i];
            bn.gamma.values_mut()[i] = orig + h;
            let loss = probe_loss(&bn.forward_train(&x)?.0.values, &probe);
            bn.gamma.values_mut()[i] = orig;
            Ok(loss)
        })?;
        err = err.max(fd_param(&d_beta, |i, h| {
            let orig = bn.beta.values()[i];
            bn.beta.values_mut()[i] = orig + h;
            let loss = probe_loss(&bn.forward_train(&x)?.0.values, &probe);
            bn.beta.values_mut()[i] = orig;
            Ok(loss)
        })?);
        let mut xm = x.clone();
        err = err.max(fd_param(&dx.values, |i, h| {
            let orig = xm.values[i];
            xm.values[i] = orig + h;
            let loss = probe_loss(&bn.forward_train(&xm)?.0.values, &probe);
            xm.values[i] = orig;
            Ok(loss)
        })?);
        out.push(LayerCheck {
            layer: "norm",
            max_rel_err: err,
        });
    }

    // Dense head.
    {
        let mut rng = SeedRng::with_stream(seed, 3);
        let mut dense = Dense::<f64>::new(6, 4, &mut rng);
        for b in dense.bias.values_mut() {
            *b = 0.3 * rng.normal();
        }
        let x: Vec<f64> = (0..3 * 6).map(|_| rng.normal()).collect();
        let y = dense.forward(&x, 3);
        let probe: Vec<f64> = (0..y.len()).map(|_| rng.normal()).collect();
        dense.weight.zero_grad();
        dense.bias.zero_grad();
        let dx = dense.backward(&x, &probe, 3);
        let d_w = dense.weight.grad().to_vec();
        let d_b = dense.bias.grad().to_vec();
        let mut err = fd_param(&d_w, |i, h| {
            let orig = dense.weight.values()[i];
            dense.weight.values_mut()[i] = orig + h;
            let loss = probe_loss(&dense.forward(&x, 3), &probe);
            dense.weight.values_mut()[i] = orig;
            Ok(loss)
        })?;
        err = err.max(fd_param(&d_b, |i, h| {
            let orig = dense.bias.values()[i];
            dense.bias.values_mut()[i] = orig + h;
            let loss = probe_loss(&dense.forward(&x, 3), &probe);
            dense.bias.values_mut()[i] = orig;
            Ok(loss)
        })?);
        let mut xm = x.clone();
        err = err.max(fd_param(&dx, |i, h| {
            let orig = xm[i];
            xm[i] = orig + h;
            let loss = probe_loss(&dense.forward(&xm, 3), &probe);
            xm[i] = orig;
            Ok(loss)
        })?);
        out.push(LayerCheck {
            layer: "dense",
            max_rel_err: err,
        });
    }

    // Squeeze-and-excitation gate.
    {
        let mut rng = SeedRng::with_stream(seed, 4);
        let mut se = SeBlock::<f64>::new(8, 2, &mut rng)?;
        let x = rand4(2, 8, 4, 4, &mut rng);
        let (y, cache) = se.forward(&x)?;
        let probe: Vec<f64> = (0..y.values.len()).map(|_| rng.normal()).collect();
        let dy = Tensor4::new(y.n, y.c, y.h, y.w, probe.clone())?;
        se.reduce_w.zero_grad();
        se.reduce_b.zero_grad();
        se.expand_w.zero_grad();
        se.expand_b.zero_grad();
        let dx = se.backward(&x, &cache, &dy);
        let param_grads = [
            se.reduce_w.grad().to_vec(),
            se.reduce_b.grad().to_vec(),
            se.expand_w.grad().to_vec(),
            se.expand_b.grad().to_vec(),
        ];
        let mut err = 0.0f64;
        for (pi, analytic) in param_grads.iter().enumerate() {
            err = err.max(fd_param(analytic, |i, h| {
                let values = match pi {
                    0 => se.reduce_w.values_mut(),
                    1 => se.reduce_b.values_mut(),
                    2 => se.expand_w.values_mut(),
                    _ => se.expand_b.values_mut(),
                };
                let orig = values[i];
                values[i] = orig + h;
                let loss = probe_loss(&se.forward(&x)?.0.values, &probe);
                let values = match pi {
                    0 => se.reduce_w.values_mut(),
                    1 => se.reduce_b.values_mut(),
                    2 => se.expand_w.values_mut(),
                    _ => se.expand_b.values_mut(),
                };
                values[i] = orig;
                Ok(loss)
            })?);
        }
        let mut xm = x.clone();
        err = err.max(fd_param(&dx.values, |i, h| {
            let orig = xm.values[i];
            xm.values[i] = orig + h;
            let loss = probe_loss(&se.forward(&xm)?.0.values, &probe);
            xm.values[i] = orig;
            Ok(loss)
        })?);
        out.push(LayerCheck {
            layer: "se",
            max_rel_err: err,
        });
    }

    // One residual block with downsampling projection shortcut.
    {
        let mut rng = SeedRng::with_stream(seed, 5);
        let mut block = BasicBlock::<f64>::new(3, 4, 2, 2, &mut rng)?;
        let x = rand4(2, 3, 8, 8, &mut rng);
        let (y, cache) = block.forward_train(&x)?;
        let probe: Vec<f64> = (0..y.values.len()).map(|_| rng.normal()).collect();
        let dy = Tensor4::new(y.n, y.c, y.h, y.w, probe.clone())?;
        let trainable: Vec<usize> = {
            let mut ts = Vec::new();
            block.collect("block", &mut ts);
            ts.iter()
                .enumerate()
                .filter(|(_, t)| t.role == TensorRole::Trainable)
                .map(|(ti, _)| ti)
                .collect()
        };
        for t in {
            let mut ts = Vec::new();
            block.collect("block", &mut ts);
            ts
        } {
            t.param.zero_grad();
        }
        let dx = block.backward(&cache, &dy);
        let mut err = 0.0f64;
        for &ti in &trainable {
            let analytic = {
                let mut ts = Vec::new();
                block.collect("block", &mut ts);
                ts[ti].param.grad().to_vec()
            };
            err = err.max(fd_param(&analytic, |i, h| {
                let orig = {
                    let mut ts = Vec::new();
                    block.collect("block", &mut ts);
                    let v = ts[ti].param.values()[i];
                    ts[ti].param.values_mut()[i] = v + h;
                    v
                };
                let loss = probe_loss(&block.forward_train(&x)?.0.values, &probe);
                let mut ts = Vec::new();
                block.collect("block", &mut ts);
                ts[ti].param.values_mut()[i] = orig;
                Ok(loss)
            })?);
        }
        let mut xm = x.clone();
        err = err.max(fd_param(&dx.values, |i, h| {
            let orig = xm.values[i];
            xm.values[i] = orig + h;
            let loss = probe_loss(&block.forward_train(&xm)?.0.values, &probe);
            xm.values[i] = orig;
            Ok(loss)
        })?);
        out.push(LayerCheck {
            layer: "residual",
            max_rel_err: err,
        });
    }

    // Focal loss gradient with respect to the logits.
    {
        let mut rng = SeedRng::with_stream(seed, 6);
        let gammas = [0.0, 0.5, 1.0, 2.0, 3.0];
        let fl = FocalLossParams {
            gamma: gammas[(seed as usize) % gammas.len()],
            alpha: [0.25, 0.75],
        };
        let mut logits: Vec<f64> = (0..8).map(|_| 2.0 * rng.normal()).collect();
        let labels = [0usize, 1, 1, 0];
        let (_, grad) = focal_loss(&logits, &labels, &fl)?;
        let err = fd_param(&grad, |i, h| {
            let orig = logits[i];
            logits[i] = orig + h;
            let loss = focal_loss(&logits, &labels, &fl)?.0;
            logits[i] = orig;
            Ok(loss)
        })?;
        out.push(LayerCheck {
            layer: "focal",
            max_rel_err: err,
        });
    }

    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::model::ArchConfig;

    fn tiny() -> ArchConfig {
        ArchConfig {
            in_channels: 2,
            widths: [4, 4, 4, 4],
            se_ratio: 2,
            classes: 2,
        }
    }

    fn batch(seed: u64) -> (Tensor4<f64>, Vec<usize>) {
        let mut rng = SeedRng::new(seed);
        let x = Tensor4::new(
            2,
            2,
            8,
            8,
            (0..2 * 2 * 8 * 8).map(|_| rng.normal()).collect(),
        )
        .unwrap();
        (x, alloc::vec![0, 1])
    }

    #[test]
    fn whole_model_gradient_check_exhaustive() {
        let mut model = SEResNet18::<f64>::new(&tiny(), 100).unwrap();
        let (x, labels) = batch(200);
        let fl = FocalLossParams::default();
        let report = gradient_check(&mut model, &x, &labels, &fl, None, 0).unwrap();
        assert!(
            report.worst < 1e-4,
            "max relative gradient error {} (by tensor: {:?})",
            report.worst,
            report
                .per_tensor
                .iter()
                .filter(|(_, e)| *e > 1e-5)
                .collect::<Vec<_>>()
        );
        // Every layer family must have been visited.
        let names: Vec<&str> = report.per_tensor.iter().map(|(n, _)| n.as_str()).collect();
        for needle in ["stem.conv", "bn.gamma", "se.reduce", "proj.conv", "head."] {
            assert!(names.iter().any(|n| n.contains(needle)), "missing {needle}");
        }
    }

    #[test]
    fn every_layer_type_across_ten_seeds() {
        for seed in 0..10u64 {
            let checks = check_layer_gradients(seed).unwrap();
            let names: Vec<&str> = checks.iter().map(|c| c.layer).collect();
            for family in ["conv", "norm", "dense", "se", "residual", "focal"] {
                assert!(names.contains(&family), "missing layer family {family}");
            }
            for c in &checks {
                assert!(
                    c.max_rel_err < 1e-4,
                    "seed {seed}, layer {}: max relative error {}",
                    c.layer,
                    c.max_rel_err
                );
            }
        }
    }

    #[test]
    fn frozen_tensor_gradient_is_exactly_zero() {
        let mut model = SEResNet18::<f64>::new(&tiny(), 5).unwrap();
        // Freeze one conv and verify its gradient never accumulates.
        for t in model.tensors_mut() {
            if t.name == "stage2.block0.conv1.conv.weight" {
                t.param.freeze();
            }
        }
        let (x, labels) = batch(77);
        let fl = FocalLossParams::default();
        model.zero_grad();
        let (logits, cache) = model.forward_train(&x).unwrap();
        let (_, dlogits) = focal_loss(&logits, &labels, &fl).unwrap();
        model.backward(&cache, &dlogits).unwrap();
        for t in model.tensors_mut() {
            if t.name == "stage2.block0.conv1.conv.weight" {
                assert!(t.param.grad().iter().all(|&g| g == 0.0));
            } else if t.name == "head.weight" {
                assert!(t.param.grad().iter().any(|&g| g != 0.0));
            }
        }
    }
}
