//! Network layers with explicit forward and backward passes.
//!
//! Convolutions run as im2col plus matrix multiply; backward passes
//! recompute the im2col matrix from the cached layer input instead of
//! holding it, keeping activation memory linear in the network size.

use alloc::vec;
use alloc::vec::Vec;

#[cfg(not(feature = "std"))]
use num_traits::Float;

use super::tensor::{matmul_abt_acc, matmul_acc, matmul_atb_acc, Param, Tensor4};
use super::{scalar, NnError, Scalar};
use crate::rng::SeedRng;

/// Normalization epsilon inside the variance square root.
pub const BN_EPS: f64 = 1e-5;
/// Running-statistics update weight per training batch.
pub const BN_MOMENTUM: f64 = 0.1;

fn kaiming<T: Scalar>(rng: &mut SeedRng, fan_in: usize, count: usize) -> Vec<T> {
    let sd = (2.0 / fan_in as f64).sqrt();
    (0..count).map(|_| scalar::<T>(rng.normal() * sd)).collect()
}

/// 2-D convolution, no bias (a normalization layer always follows).
#[derive(Clone, Debug)]
pub struct Conv2d<T> {
    /// Kernel, `[out][in][k][k]`.
    pub weight: Param<T>,
    in_channels: usize,
    out_channels: usize,
    kernel: usize,
    stride: usize,
    padding: usize,
}

impl<T: Scalar> Conv2d<T> {
    /// Kaiming-initialized convolution.
    pub fn new(
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        rng: &mut SeedRng,
    ) -> Self {
        let fan_in = in_channels * kernel * kernel;
        let weight = Param::new(
            vec![out_channels, in_channels, kernel, kernel],
            kaiming(rng, fan_in, out_channels * fan_in),
        );
        Self {
            weight,
            in_channels,
            out_channels,
            kernel,
            stride,
            padding,
        }
    }

    /// Output spatial size for an input size.
    pub fn out_size(&self, h: usize, w: usize) -> Result<(usize, usize), NnError> {
        let (k, s, p) = (self.kernel, self.stride, self.padding);
        if h + 2 * p < k || w + 2 * p < k {
            return Err(NnError::BadShape {
                context: "input smaller than convolution kernel",
            });
        }
        Ok(((h + 2 * p - k) / s + 1, (w + 2 * p - k) / s + 1))
    }

    fn im2col(&self, x: &Tensor4<T>, n: usize, h_out: usize, w_out: usize, col: &mut [T]) {
        let (k, s, p) = (self.kernel, self.stride, self.padding);
        let cols = h_out * w_out;
        let sample = x.sample(n);
        let mut row = 0;
        for c in 0..self.in_channels {
            let plane = &sample[c * x.h * x.w..(c + 1) * x.h * x.w];
            for ki in 0..k {
                for kj in 0..k {
                    let out_row = &mut col[row * cols..(row + 1) * cols];
                    for oh in 0..h_out {
                        let ih = (oh * s + ki) as isize - p as isize;
                        let base = oh * w_out;
                        if ih < 0 || ih >= x.h as isize {
                            for v in &mut out_row[base..base + w_out] {
                                *v = T::zero();
                            }
                            continue;
                        }
                        let in_base = ih as usize * x.w;
                        for ow in 0..w_out {
                            let iw = (ow * s + kj) as isize - p as isize;
                            out_row[base + ow] = if iw < 0 || iw >= x.w as isize {
                                T::zero()
                            } else {
                                plane[in_base + iw as usize]
                            };
                        }
                    }
                    row += 1;
                }
            }
        }
    }

    /// Forward pass.
    pub fn forward(&self, x: &Tensor4<T>) -> Result<Tensor4<T>, NnError> {
        if x.c != self.in_channels {
            return Err(NnError::ChannelMismatch {
                expected: self.in_channels,
                got: x.c,
            });
        }
        let (h_out, w_out) = self.out_size(x.h, x.w)?;
        let k2 = self.in_channels * self.kernel * self.kernel;
        let cols = h_out * w_out;
        let mut y = Tensor4::zeros(x.n, self.out_channels, h_out, w_out);
        let mut col = vec![T::zero(); k2 * cols];
        for n in 0..x.n {
            self.im2col(x, n, h_out, w_out, &mut col);
            matmul_acc(
                y.sample_mut(n),
                self.weight.values(),
                &col,
                self.out_channels,
                k2,
                cols,
            );
        }
        Ok(y)
    }

    /// Backward pass: accumulates the weight gradient and returns the input
    /// gradient.
    pub fn backward(&mut self, x: &Tensor4<T>, dy: &Tensor4<T>) -> Tensor4<T> {
        let (h_out, w_out) = (dy.h, dy.w);
        let k2 = self.in_channels * self.kernel * self.kernel;
        let cols = h_out * w_out;
        let mut col = vec![T::zero(); k2 * cols];
        let mut dcol = vec![T::zero(); k2 * cols];
        let mut dw = vec![T::zero(); self.weight.len()];
        let mut dx = Tensor4::zeros(x.n, x.c, x.h, x.w);
        let (k, s, p) = (self.kernel, self.stride, self.padding);
        for n in 0..x.n {
            self.im2col(x, n, h_out, w_out, &mut col);
            // dW += dY · colᵀ
            matmul_abt_acc(&mut dw, dy.sample(n), &col, self.out_channels, cols, k2);
            // dcol = Wᵀ · dY
            for v in &mut dcol {
                *v = T::zero();
            }
            matmul_atb_acc(
                &mut dcol,
                self.weight.values(),
                dy.sample(n),
                k2,
                self.out_channels,
                cols,
            );
            // col2im scatter-add.
            let dst = dx.sample_mut(n);
            let mut row = 0;
            for c in 0..self.in_channels {
                let plane = &mut dst[c * x.h * x.w..(c + 1) * x.h * x.w];
                for ki in 0..k {
                    for kj in 0..k {
                        let src = &dcol[row * cols..(row + 1) * cols];
                        for oh in 0..h_out {
                            let ih = (oh * s + ki) as isize - p as isize;
                            if ih < 0 || ih >= x.h as isize {
                                continue;
                            }
                            let in_base = ih as usize * x.w;
                            for ow in 0..w_out {
                                let iw = (ow * s + kj) as isize - p as isize;
                                if iw >= 0 && iw < x.w as isize {
                                    let idx = in_base + iw as usize;
                                    plane[idx] = plane[idx] + src[oh * w_out + ow];
                                }
                            }
                        }
                        row += 1;
                    }
                }
            }
        }
        self.weight.accumulate(&dw);
        dx
    }

    /// Reinitialize the kernel in place (transfer learning with a different
    /// input channel count).
    pub fn reinit(&mut self, rng: &mut SeedRng) {
        let fan_in = self.in_channels * self.kernel * self.kernel;
        let fresh: Vec<T> = kaiming(rng, fan_in, self.weight.len());
        self.weight.values_mut().copy_from_slice(&fresh);
    }
}

/// Per-channel batch statistics cached for the backward pass.
#[derive(Clone, Debug)]
pub struct BnStats<T> {
    mean: Vec<T>,
    var: Vec<T>,
}

/// Batch normalization over `(N, H, W)` per channel.
#[derive(Clone, Debug)]
pub struct BatchNorm<T> {
    /// Scale, one per channel.
    pub gamma: Param<T>,
    /// Shift, one per channel.
    pub beta: Param<T>,
    /// Running mean, used at inference.
    pub running_mean: Param<T>,
    /// Running variance, used at inference.
    pub running_var: Param<T>,
    channels: usize,
}

impl<T: Scalar> BatchNorm<T> {
    /// Identity-initialized normalization.
    pub fn new(channels: usize) -> Self {
        let mut running_mean = Param::zeros(vec![channels]);
        let mut running_var = Param::full(vec![channels], T::one());
        running_mean.freeze();
        running_var.freeze();
        Self {
            gamma: Param::full(vec![channels], T::one()),
            beta: Param::zeros(vec![channels]),
            running_mean,
            running_var,
            channels,
        }
    }

    /// Training forward: normalize by batch statistics and fold them into
    /// the running averages.
    pub fn forward_train(&mut self, x: &Tensor4<T>) -> Result<(Tensor4<T>, BnStats<T>), NnError> {
        self.check(x)?;
        let m = x.n * x.h * x.w;
        let m_t = scalar::<T>(m as f64);
        let plane = x.h * x.w;
        let mut mean = vec![T::zero(); self.channels];
        let mut var = vec![T::zero(); self.channels];
        for c in 0..self.channels {
            let mut sum = T::zero();
            for n in 0..x.n {
                let s = &x.sample(n)[c * plane..(c + 1) * plane];
                for &v in s {
                    sum = sum + v;
                }
            }
            let mu = sum / m_t;
            let mut sq = T::zero();
            for n in 0..x.n {
                let s = &x.sample(n)[c * plane..(c + 1) * plane];
                for &v in s {
                    let d = v - mu;
                    sq = sq + d * d;
                }
            }
            mean[c] = mu;
            var[c] = sq / m_t;
        }

        let mom = scalar::<T>(BN_MOMENTUM);
        let keep = T::one() - mom;
        let unbias = if m > 1 {
            scalar::<T>(m as f64 / (m - 1) as f64)
        } else {
            T::one()
        };
        for c in 0..self.channels {
            let rm = self.running_mean.values_mut();
            rm[c] = keep * rm[c] + mom * mean[c];
            let rv = self.running_var.values_mut();
            rv[c] = keep * rv[c] + mom * var[c] * unbias;
        }

        let y = self.scale(x, &mean, &var);
        Ok((y, BnStats { mean, var }))
    }

    /// Inference forward: normalize by running statistics.
    pub fn forward_eval(&self, x: &Tensor4<T>) -> Result<Tensor4<T>, NnError> {
        self.check(x)?;
        Ok(self.scale(x, self.running_mean.values(), self.running_var.values()))
    }

    fn check(&self, x: &Tensor4<T>) -> Result<(), NnError> {
        if x.c != self.channels {
            return Err(NnError::ChannelMismatch {
                expected: self.channels,
                got: x.c,
            });
        }
        Ok(())
    }

    fn scale(&self, x: &Tensor4<T>, mean: &[T], var: &[T]) -> Tensor4<T> {
        let eps = scalar::<T>(BN_EPS);
        let plane = x.h * x.w;
        let mut y = Tensor4::zeros(x.n, x.c, x.h, x.w);
        for c in 0..self.channels {
            let inv = T::one() / (var[c] + eps).sqrt();
            let g = self.gamma.values()[c] * inv;
            let b = self.beta.values()[c] - g * mean[c];
            for n in 0..x.n {
                let src = &x.sample(n)[c * plane..(c + 1) * plane];
                let dst = &mut y.sample_mut(n)[c * plane..(c + 1) * plane];
                for (d, &s) in dst.iter_mut().zip(src) {
                    *d = g * s + b;
                }
            }
        }
        y
    }

    /// Training backward. `x` is the layer input that produced `stats`.
    pub fn backward(&mut self, x: &Tensor4<T>, stats: &BnStats<T>, dy: &Tensor4<T>) -> Tensor4<T> {
        let eps = scalar::<T>(BN_EPS);
        let m = scalar::<T>((x.n * x.h * x.w) as f64);
        let plane = x.h * x.w;
        let mut dgamma = vec![T::zero(); self.channels];
        let mut dbeta = vec![T::zero(); self.channels];
        let mut dx = Tensor4::zeros(x.n, x.c, x.h, x.w);
        for c in 0..self.channels {
            let inv = T::one() / (stats.var[c] + eps).sqrt();
            let mu = stats.mean[c];
            let mut sum_dy = T::zero();
            let mut sum_dy_xhat = T::zero();
            for n in 0..x.n {
                let xs = &x.sample(n)[c * plane..(c + 1) * plane];
                let ds = &dy.sample(n)[c * plane..(c + 1) * plane];
                for (&xv, &dv) in xs.iter().zip(ds) {
                    sum_dy = sum_dy + dv;
                    sum_dy_xhat = sum_dy_xhat + dv * (xv - mu) * inv;
                }
            }
            dgamma[c] = sum_dy_xhat;
            dbeta[c] = sum_dy;
            let g = self.gamma.values()[c];
            let mean_dy = sum_dy / m;
            let mean_dy_xhat = sum_dy_xhat / m;
            for n in 0..x.n {
                let xs = &x.sample(n)[c * plane..(c + 1) * plane];
                let ds = &dy.sample(n)[c * plane..(c + 1) * plane];
                let out = &mut dx.sample_mut(n)[c * plane..(c + 1) * plane];
                for ((o, &xv), &dv) in out.iter_mut().zip(xs).zip(ds) {
                    let xhat = (xv - mu) * inv;
                    *o = g * inv * (dv - mean_dy - xhat * mean_dy_xhat);
                }
            }
        }
        self.gamma.accumulate(&dgamma);
        self.beta.accumulate(&dbeta);
        dx
    }
}

/// Elementwise max(0, x).
pub fn relu<T: Scalar>(x: &Tensor4<T>) -> Tensor4<T> {
    let mut y = x.clone();
    for v in &mut y.values {
        if *v < T::zero() {
            *v = T::zero();
        }
    }
    y
}

/// Backward of relu given its pre-activation input.
pub fn relu_backward<T: Scalar>(pre: &Tensor4<T>, dy: &Tensor4<T>) -> Tensor4<T> {
    let mut dx = dy.clone();
    for (d, &z) in dx.values.iter_mut().zip(&pre.values) {
        if z <= T::zero() {
            *d = T::zero();
        }
    }
    dx
}

/// Global average pool to `(N, C)` row-major.
pub fn global_avg_pool<T: Scalar>(x: &Tensor4<T>) -> Vec<T> {
    let plane = x.h * x.w;
    let inv = T::one() / scalar::<T>(plane as f64);
    let mut out = vec![T::zero(); x.n * x.c];
    for n in 0..x.n {
        for c in 0..x.c {
            let s = &x.sample(n)[c * plane..(c + 1) * plane];
            let mut acc = T::zero();
            for &v in s {
                acc = acc + v;
            }
            out[n * x.c + c] = acc * inv;
        }
    }
    out
}

/// Backward of the global average pool.
pub fn global_avg_pool_backward<T: Scalar>(
    dpooled: &[T],
    n: usize,
    c: usize,
    h: usize,
    w: usize,
) -> Tensor4<T> {
    let inv = T::one() / scalar::<T>((h * w) as f64);
    let mut dx = Tensor4::zeros(n, c, h, w);
    let plane = h * w;
    for i in 0..n {
        for ch in 0..c {
            let d = dpooled[i * c + ch] * inv;
            for v in &mut dx.sample_mut(i)[ch * plane..(ch + 1) * plane] {
                *v = d;
            }
        }
    }
    dx
}

/// Fully connected layer on `(N, in)` row-major activations.
#[derive(Clone, Debug)]
pub struct Dense<T> {
    /// Weights, `[out][in]`.
    pub weight: Param<T>,
    /// Bias, `[out]`.
    pub bias: Param<T>,
    in_features: usize,
    out_features: usize,
}

impl<T: Scalar> Dense<T> {
    /// Kaiming-initialized dense layer with zero bias.
    pub fn new(in_features: usize, out_features: usize, rng: &mut SeedRng) -> Self {
        Self {
            weight: Param::new(
                vec![out_features, in_features],
                kaiming(rng, in_features, out_features * in_features),
            ),
            bias: Param::zeros(vec![out_features]),
            in_features,
            out_features,
        }
    }

    /// `y = x Wᵀ + b` for a batch of `n` rows.
    pub fn forward(&self, x: &[T], n: usize) -> Vec<T> {
        debug_assert_eq!(x.len(), n * self.in_features);
        let mut y = vec![T::zero(); n * self.out_features];
        matmul_abt_acc(
            &mut y,
            x,
            self.weight.values(),
            n,
            self.in_features,
            self.out_features,
        );
        for row in y.chunks_mut(self.out_features) {
            for (v, &b) in row.iter_mut().zip(self.bias.values()) {
                *v = *v + b;
            }
        }
        y
    }

    /// Backward: accumulates weight and bias gradients, returns `dx`.
    pub fn backward(&mut self, x: &[T], dy: &[T], n: usize) -> Vec<T> {
        let mut dw = vec![T::zero(); self.weight.len()];
        matmul_atb_acc(&mut dw, dy, x, self.out_features, n, self.in_features);
        self.weight.accumulate(&dw);

        let mut db = vec![T::zero(); self.out_features];
        for row in dy.chunks(self.out_features) {
            for (d, &v) in db.iter_mut().zip(row) {
                *d = *d + v;
            }
        }
        self.bias.accumulate(&db);

        let mut dx = vec![T::zero(); n * self.in_features];
        matmul_acc(
            &mut dx,
            dy,
            self.weight.values(),
            n,
            self.out_features,
            self.in_features,
        );
        dx
    }
}

/// Squeeze-and-excitation intermediates needed for backward.
#[derive(Clone, Debug)]
pub struct SeCache<T> {
    z: Vec<T>,
    a1: Vec<T>,
    s: Vec<T>,
}

/// Squeeze-and-excitation channel gate.
#[derive(Clone, Debug)]
pub struct SeBlock<T> {
    /// Bottleneck weights, `[C][C/r]`.
    pub reduce_w: Param<T>,
    /// Bottleneck bias, `[C/r]`.
    pub reduce_b: Param<T>,
    /// Expansion weights, `[C/r][C]`.
    pub expand_w: Param<T>,
    /// Expansion bias, `[C]`.
    pub expand_b: Param<T>,
    channels: usize,
    reduced: usize,
}

impl<T: Scalar> SeBlock<T> {
    /// Build a gate for `channels` with reduction `ratio`.
    pub fn new(channels: usize, ratio: usize, rng: &mut SeedRng) -> Result<Self, NnError> {
        if ratio == 0 || channels % ratio != 0 {
            return Err(NnError::InvalidParam(
                "squeeze-excitation ratio must divide the channel count",
            ));
        }
        let reduced = channels / ratio;
        Ok(Self {
            reduce_w: Param::new(
                vec![channels, reduced],
                kaiming(rng, channels, channels * reduced),
            ),
            reduce_b: Param::zeros(vec![reduced]),
            expand_w: Param::new(
                vec![reduced, channels],
                kaiming(rng, reduced, reduced * channels),
            ),
            expand_b: Param::zeros(vec![channels]),
            channels,
            reduced,
        })
    }

    /// Forward: scale each channel by sigmoid(W2 relu(W1 GAP(x) + b1) + b2).
    pub fn forward(&self, x: &Tensor4<T>) -> Result<(Tensor4<T>, SeCache<T>), NnError> {
        if x.c != self.channels {
            return Err(NnError::ChannelMismatch {
                expected: self.channels,
                got: x.c,
            });
        }
        let z = global_avg_pool(x);
        let mut a1 = vec![T::zero(); x.n * self.reduced];
        matmul_acc(&mut a1, &z, self.reduce_w.values(), x.n, self.channels, self.reduced);
        for row in a1.chunks_mut(self.reduced) {
            for (v, &b) in row.iter_mut().zip(self.reduce_b.values()) {
                *v = *v + b;
            }
        }
        let h: Vec<T> = a1.iter().map(|&v| v.max(T::zero())).collect();
        let mut a2 = vec![T::zero(); x.n * self.channels];
        matmul_acc(&mut a2, &h, self.expand_w.values(), x.n, self.reduced, self.channels);
        for row in a2.chunks_mut(self.channels) {
            for (v, &b) in row.iter_mut().zip(self.expand_b.values()) {
                *v = *v + b;
            }
        }
        let s: Vec<T> = a2
            .iter()
            .map(|&v| T::one() / (T::one() + (-v).exp()))
            .collect();

        let plane = x.h * x.w;
        let mut y = x.clone();
        for n in 0..x.n {
            let sample = y.sample_mut(n);
            for c in 0..self.channels {
                let g = s[n * self.channels + c];
                for v in &mut sample[c * plane..(c + 1) * plane] {
                    *v = *v * g;
                }
            }
        }
        Ok((y, SeCache { z, a1, s }))
    }

    /// Backward: accumulates gate parameter gradients, returns `dx`.
    pub fn backward(&mut self, x: &Tensor4<T>, cache: &SeCache<T>, dy: &Tensor4<T>) -> Tensor4<T> {
        let plane = x.h * x.w;
        let n = x.n;
        let c = self.channels;

        // ds = sum over the plane of dy * x, plus direct path dy * s.
        let mut ds = vec![T::zero(); n * c];
        let mut dx = Tensor4::zeros(x.n, x.c, x.h, x.w);
        for i in 0..n {
            let xs = x.sample(i);
            let dys = dy.sample(i);
            let dst = dx.sample_mut(i);
            for ch in 0..c {
                let g = cache.s[i * c + ch];
                let mut acc = T::zero();
                for j in ch * plane..(ch + 1) * plane {
                    acc = acc + dys[j] * xs[j];
                    dst[j] = dys[j] * g;
                }
                ds[i * c + ch] = acc;
            }
        }

        // Through the sigmoid.
        let mut da2 = ds;
        for (v, &s) in da2.iter_mut().zip(&cache.s) {
            *v = *v * s * (T::one() - s);
        }

        let h: Vec<T> = cache.a1.iter().map(|&v| v.max(T::zero())).collect();
        let mut dw2 = vec![T::zero(); self.expand_w.len()];
        matmul_atb_acc(&mut dw2, &h, &da2, self.reduced, n, c);
        self.expand_w.accumulate(&dw2);
        let mut db2 = vec![T::zero(); c];
        for row in da2.chunks(c) {
            for (d, &v) in db2.iter_mut().zip(row) {
                *d = *d + v;
            }
        }
        self.expand_b.accumulate(&db2);

        let mut dh = vec![T::zero(); n * self.reduced];
        matmul_abt_acc(&mut dh, &da2, self.expand_w.values(), n, c, self.reduced);
        let mut da1 = dh;
        for (v, &a) in da1.iter_mut().zip(&cache.a1) {
            if a <= T::zero() {
                *v = T::zero();
            }
        }

        let mut dw1 = vec![T::zero(); self.reduce_w.len()];
        matmul_atb_acc(&mut dw1, &cache.z, &da1, c, n, self.reduced);
        self.reduce_w.accumulate(&dw1);
        let mut db1 = vec![T::zero(); self.reduced];
        for row in da1.chunks(self.reduced) {
            for (d, &v) in db1.iter_mut().zip(row) {
                *d = *d + v;
            }
        }
        self.reduce_b.accumulate(&db1);

        let mut dz = vec![T::zero(); n * c];
        matmul_abt_acc(&mut dz, &da1, self.reduce_w.values(), n, self.reduced, c);

        // GAP backward folds dz onto the plane.
        let inv = T::one() / scalar::<T>(plane as f64);
        for i in 0..n {
            let dst = dx.sample_mut(i);
            for ch in 0..c {
                let d = dz[i * c + ch] * inv;
                for v in &mut dst[ch * plane..(ch + 1) * plane] {
                    *v = *v + d;
                }
            }
        }
        dx
    }

    /// Channel gates from the last forward pass, for boundedness checks.
    pub fn gates<'a>(&self, cache: &'a SeCache<T>) -> &'a [T] {
        &cache.s
    }
}

#[cfg(test)]
mod tests {
    // Finite-difference harnesses index several buffers by one position.
    #![allow(clippy::needless_range_loop)]

    use super::*;
    use crate::rng::SeedRng;

    fn rand_tensor(n: usize, c: usize, h: usize, w: usize, rng: &mut SeedRng) -> Tensor4<f64> {
        Tensor4::new(n, c, h, w, (0..n * c * h * w).map(|_| rng.normal()).collect()).unwrap()
    }

    /// Probe loss: sum of elementwise product with a fixed random tensor.
    /// Its gradient with respect to the layer output is the probe itself,
    /// which exercises the layer backward with a known upstream gradient.
    fn probe_loss(y: &[f64], probe: &[f64]) -> f64 {
        y.iter().zip(probe).map(|(a, b)| a * b).sum()
    }

    fn max_rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
        analytic
            .iter()
            .zip(numeric)
            .map(|(&a, &n)| (a - n).abs() / a.abs().max(n.abs()).max(1e-6))
            .fold(0.0, f64::max)
    }

    const FD_H: f64 = 1e-5;

    #[test]
    fn conv_matches_direct_convolution() {
        let mut rng = SeedRng::new(3);
        let conv = Conv2d::<f64>::new(2, 3, 3, 2, 1, &mut rng);
        let x = rand_tensor(2, 2, 5, 6, &mut rng);
        let y = conv.forward(&x).unwrap();
        assert_eq!((y.n, y.c, y.h, y.w), (2, 3, 3, 3));
        // Direct nested-loop convolution.
        for n in 0..2 {
            for o in 0..3 {
                for oh in 0..y.h {
                    for ow in 0..y.w {
                        let mut want = 0.0;
                        for c in 0..2 {
                            for ki in 0..3 {
                                for kj in 0..3 {
                                    let ih = (oh * 2 + ki) as isize - 1;
                                    let iw = (ow * 2 + kj) as isize - 1;
                                    if ih < 0 || iw < 0 || ih >= 5 || iw >= 6 {
                                        continue;
                                    }
                                    let wv = conv.weight.values()
                                        [((o * 2 + c) * 3 + ki) * 3 + kj];
                                    want += wv * x.at(n, c, ih as usize, iw as usize);
                                }
                            }
                        }
                        assert!((y.at(n, o, oh, ow) - want).abs() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn conv_gradients_match_finite_differences() {
        let mut rng = SeedRng::new(5);
        let mut conv = Conv2d::<f64>::new(2, 3, 3, 1, 1, &mut rng);
        let x = rand_tensor(2, 2, 4, 4, &mut rng);
        let y = conv.forward(&x).unwrap();
        let probe: Vec<f64> = (0..y.values.len()).map(|_| rng.normal()).collect();

        conv.weight.zero_grad();
        let dy = Tensor4::new(y.n, y.c, y.h, y.w, probe.clone()).unwrap();
        let dx = conv.backward(&x, &dy);

        // Weight gradient.
        let mut numeric = vec![0.0; conv.weight.len()];
        for i in 0..conv.weight.len() {
            let orig = conv.weight.values()[i];
            conv.weight.values_mut()[i] = orig + FD_H;
            let hi = probe_loss(&conv.forward(&x).unwrap().values, &probe);
            conv.weight.values_mut()[i] = orig - FD_H;
            let lo = probe_loss(&conv.forward(&x).unwrap().values, &probe);
            conv.weight.values_mut()[i] = orig;
            numeric[i] = (hi - lo) / (2.0 * FD_H);
        }
        assert!(max_rel_err(conv.weight.grad(), &numeric) < 1e-7);

        // Input gradient.
        let mut x_var = x.clone();
        let mut numeric = vec![0.0; x.values.len()];
        for i in 0..x.values.len() {
            let orig = x_var.values[i];
            x_var.values[i] = orig + FD_H;
            let hi = probe_loss(&conv.forward(&x_var).unwrap().values, &probe);
            x_var.values[i] = orig - FD_H;
            let lo = probe_loss(&conv.forward(&x_var).unwrap().values, &probe);
            x_var.values[i] = orig;
            numeric[i] = (hi - lo) / (2.0 * FD_H);
        }
        assert!(max_rel_err(&dx.values, &numeric) < 1e-7);
    }

    #[test]
    fn batchnorm_normalizes_and_tracks_running_stats() {
        let mut rng = SeedRng::new(9);
        let mut bn = BatchNorm::<f64>::new(3);
        let x = rand_tensor(4, 3, 5, 5, &mut rng);
        let (y, _) = bn.forward_train(&x).unwrap();
        let plane = 25;
        for c in 0..3 {
            let mut sum = 0.0;
            let mut sq = 0.0;
            for n in 0..4 {
                for &v in &y.sample(n)[c * plane..(c + 1) * plane] {
                    sum += v;
                    sq += v * v;
                }
            }
            let m = (4 * plane) as f64;
            assert!((sum / m).abs() < 1e-12, "channel mean not zero");
            assert!((sq / m - 1.0).abs() < 1e-3, "channel variance not one");
        }
        // Running stats moved toward the batch stats from (0, 1).
        assert!(bn.running_mean.values().iter().any(|&v| v != 0.0));

        // After many identical batches the running stats converge and eval
        // output approaches train output.
        for _ in 0..200 {
            bn.forward_train(&x).unwrap();
        }
        let (yt, _) = bn.forward_train(&x).unwrap();
        let ye = bn.forward_eval(&x).unwrap();
        let max_dev = yt
            .values
            .iter()
            .zip(&ye.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        // Unbiased running variance vs biased batch variance keeps a small
        // constant offset; the two agree to the corresponding factor.
        assert!(max_dev < 0.02, "train/eval gap {max_dev}");
    }

    #[test]
    fn batchnorm_gradients_match_finite_differences() {
        let mut rng = SeedRng::new(17);
        let mut bn = BatchNorm::<f64>::new(2);
        let x = rand_tensor(3, 2, 4, 4, &mut rng);
        let probe: Vec<f64> = (0..x.values.len()).map(|_| rng.normal()).collect();

        let (y, stats) = bn.forward_train(&x).unwrap();
        let dy = Tensor4::new(y.n, y.c, y.h, y.w, probe.clone()).unwrap();
        bn.gamma.zero_grad();
        bn.beta.zero_grad();
        let dx = bn.backward(&x, &stats, &dy);

        // Forward as a pure function for differencing (running stats do not
        // feed the train-mode output).
        let eval = |bn: &mut BatchNorm<f64>, x: &Tensor4<f64>| {
            probe_loss(&bn.forward_train(x).unwrap().0.values, &probe)
        };

        for (param_idx, len) in [(0usize, 2usize), (1, 2)] {
            let mut numeric = vec![0.0; len];
            for i in 0..len {
                let get = |bn: &BatchNorm<f64>| match param_idx {
                    0 => bn.gamma.values()[i],
                    _ => bn.beta.values()[i],
                };
                let set = |bn: &mut BatchNorm<f64>, v: f64| match param_idx {
                    0 => bn.gamma.values_mut()[i] = v,
                    _ => bn.beta.values_mut()[i] = v,
                };
                let orig = get(&bn);
                set(&mut bn, orig + FD_H);
                let hi = eval(&mut bn, &x);
                set(&mut bn, orig - FD_H);
                let lo = eval(&mut bn, &x);
                set(&mut bn, orig);
                numeric[i] = (hi - lo) / (2.0 * FD_H);
            }
            let analytic = if param_idx == 0 {
                bn.gamma.grad()
            } else {
                bn.beta.grad()
            };
            assert!(max_rel_err(analytic, &numeric) < 1e-7);
        }

        let mut x_var = x.clone();
        let mut numeric = vec![0.0; x.values.len()];
        for i in 0..x.values.len() {
            let orig = x_var.values[i];
            x_var.values[i] = orig + FD_H;
            let hi = eval(&mut bn, &x_var);
            x_var.values[i] = orig - FD_H;
            let lo = eval(&mut bn, &x_var);
            x_var.values[i] = orig;
            numeric[i] = (hi - lo) / (2.0 * FD_H);
        }
        assert!(max_rel_err(&dx.values, &numeric) < 1e-6);
    }

    #[test]
    fn se_block_zero_params_halve_the_input() {
        let mut rng = SeedRng::new(21);
        let mut se = SeBlock::<f64>::new(4, 2, &mut rng).unwrap();
        for p in [&mut se.reduce_w, &mut se.reduce_b, &mut se.expand_w, &mut se.expand_b] {
            for v in p.values_mut() {
                *v = 0.0;
            }
        }
        let x = rand_tensor(2, 4, 3, 3, &mut rng);
        let (y, cache) = se.forward(&x).unwrap();
        for (a, b) in y.values.iter().zip(&x.values) {
            assert!((a - 0.5 * b).abs() < 1e-15);
        }
        for &s in se.gates(&cache) {
            assert_eq!(s, 0.5);
        }

        let zero = Tensor4::zeros(1, 4, 3, 3);
        let (y, _) = se.forward(&zero).unwrap();
        assert!(y.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn se_block_matches_dense_algebra_oracle() {
        let mut rng = SeedRng::new(33);
        let se = SeBlock::<f64>::new(64, 16, &mut rng).unwrap();
        let x = rand_tensor(2, 64, 3, 2, &mut rng);
        let (y, cache) = se.forward(&x).unwrap();

        // Independent direct computation with explicit loops.
        let plane = 6;
        for n in 0..2 {
            let mut z = vec![0.0; 64];
            for c in 0..64 {
                let s = &x.sample(n)[c * plane..(c + 1) * plane];
                z[c] = s.iter().sum::<f64>() / plane as f64;
            }
            let mut h = [0.0; 4];
            for q in 0..4 {
                let mut a = se.reduce_b.values()[q];
                for c in 0..64 {
                    a += z[c] * se.reduce_w.values()[c * 4 + q];
                }
                h[q] = a.max(0.0);
            }
            for c in 0..64 {
                let mut a = se.expand_b.values()[c];
                for q in 0..4 {
                    a += h[q] * se.expand_w.values()[q * 64 + c];
                }
                let s = 1.0 / (1.0 + (-a).exp());
                assert!(s > 0.0 && s < 1.0, "gate out of (0,1)");
                for j in 0..plane {
                    let want = x.sample(n)[c * plane + j] * s;
                    let got = y.sample(n)[c * plane + j];
                    assert!((got - want).abs() < 1e-10);
                }
            }
        }
        for &s in se.gates(&cache) {
            assert!(s > 0.0 && s < 1.0);
        }
    }

    #[test]
    fn se_block_gradients_match_finite_differences() {
        let mut rng = SeedRng::new(41);
        let mut se = SeBlock::<f64>::new(4, 2, &mut rng).unwrap();
        let x = rand_tensor(2, 4, 3, 3, &mut rng);
        let probe: Vec<f64> = (0..x.values.len()).map(|_| rng.normal()).collect();

        let (y, cache) = se.forward(&x).unwrap();
        let dy = Tensor4::new(y.n, y.c, y.h, y.w, probe.clone()).unwrap();
        let dx = se.backward(&x, &cache, &dy);

        // Input gradient.
        let mut x_var = x.clone();
        let mut numeric = vec![0.0; x.values.len()];
        for i in 0..x.values.len() {
            let orig = x_var.values[i];
            x_var.values[i] = orig + FD_H;
            let hi = probe_loss(&se.forward(&x_var).unwrap().0.values, &probe);
            x_var.values[i] = orig - FD_H;
            let lo = probe_loss(&se.forward(&x_var).unwrap().0.values, &probe);
            x_var.values[i] = orig;
            numeric[i] = (hi - lo) / (2.0 * FD_H);
        }
        assert!(max_rel_err(&dx.values, &numeric) < 1e-6);

        // Each parameter tensor in turn, via an index-based accessor.
        for which in 0..4 {
            let len = match which {
                0 => se.reduce_w.len(),
                1 => se.reduce_b.len(),
                2 => se.expand_w.len(),
                _ => se.expand_b.len(),
            };
            let mut numeric = vec![0.0; len];
            for i in 0..len {
                let get = |se: &SeBlock<f64>| match which {
                    0 => se.reduce_w.values()[i],
                    1 => se.reduce_b.values()[i],
                    2 => se.expand_w.values()[i],
                    _ => se.expand_b.values()[i],
                };
                let set = |se: &mut SeBlock<f64>, v: f64| match which {
                    0 => se.reduce_w.values_mut()[i] = v,
                    1 => se.reduce_b.values_mut()[i] = v,
                    2 => se.expand_w.values_mut()[i] = v,
                    _ => se.expand_b.values_mut()[i] = v,
                };
                let orig = get(&se);
                set(&mut se, orig + FD_H);
                let hi = probe_loss(&se.forward(&x).unwrap().0.values, &probe);
                set(&mut se, orig - FD_H);
                let lo = probe_loss(&se.forward(&x).unwrap().0.values, &probe);
                set(&mut se, orig);
                numeric[i] = (hi - lo) / (2.0 * FD_H);
            }
            let analytic = match which {
                0 => se.reduce_w.grad(),
                1 => se.reduce_b.grad(),
                2 => se.expand_w.grad(),
                _ => se.expand_b.grad(),
            };
            assert!(max_rel_err(analytic, &numeric) < 1e-6, "tensor {which}");
        }
    }

    #[test]
    fn dense_and_pool_gradients_match_finite_differences() {
        let mut rng = SeedRng::new(55);
        let mut dense = Dense::<f64>::new(6, 2, &mut rng);
        let x: Vec<f64> = (0..3 * 6).map(|_| rng.normal()).collect();
        let probe: Vec<f64> = (0..3 * 2).map(|_| rng.normal()).collect();

        let dx = dense.backward(&x, &probe, 3);
        let mut numeric_w = vec![0.0; dense.weight.len()];
        for i in 0..dense.weight.len() {
            let orig = dense.weight.values()[i];
            dense.weight.values_mut()[i] = orig + FD_H;
            let hi = probe_loss(&dense.forward(&x, 3), &probe);
            dense.weight.values_mut()[i] = orig - FD_H;
            let lo = probe_loss(&dense.forward(&x, 3), &probe);
            dense.weight.values_mut()[i] = orig;
            numeric_w[i] = (hi - lo) / (2.0 * FD_H);
        }
        assert!(max_rel_err(dense.weight.grad(), &numeric_w) < 1e-7);

        let mut numeric_x = vec![0.0; x.len()];
        let mut x_var = x.clone();
        for i in 0..x.len() {
            let orig = x_var[i];
            x_var[i] = orig + FD_H;
            let hi = probe_loss(&dense.forward(&x_var, 3), &probe);
            x_var[i] = orig - FD_H;
            let lo = probe_loss(&dense.forward(&x_var, 3), &probe);
            x_var[i] = orig;
            numeric_x[i] = (hi - lo) / (2.0 * FD_H);
        }
        assert!(max_rel_err(&dx, &numeric_x) < 1e-7);

        // Pool forward/backward consistency.
        let t = rand_tensor(2, 3, 4, 5, &mut rng);
        let pooled = global_avg_pool(&t);
        assert_eq!(pooled.len(), 6);
        let mean0: f64 = t.sample(0)[..20].iter().sum::<f64>() / 20.0;
        assert!((pooled[0] - mean0).abs() < 1e-12);
        let dp: Vec<f64> = (0..6).map(|_| rng.normal()).collect();
        let dt = global_avg_pool_backward(&dp, 2, 3, 4, 5);
        assert!((dt.at(0, 0, 0, 0) - dp[0] / 20.0).abs() < 1e-15);
        assert!((dt.at(1, 2, 3, 4) - dp[5] / 20.0).abs() < 1e-15);
    }

    #[test]
    fn relu_masks_by_preactivation_sign() {
        let pre = Tensor4::new(1, 1, 1, 4, vec![-1.0, 0.0, 2.0, -0.5]).unwrap();
        let y = relu(&pre);
        assert_eq!(y.values, vec![0.0, 0.0, 2.0, 0.0]);
        let dy = Tensor4::new(1, 1, 1, 4, vec![1.0, 1.0, 1.0, 1.0]).unwrap();
        let dx = relu_backward(&pre, &dy);
        assert_eq!(dx.values, vec![0.0, 0.0, 1.0, 0.0]);
    }
}
