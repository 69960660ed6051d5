//! Dense tensors and trainable parameters.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;


use super::NnError;
use crate::nn::Scalar;

/// A batch-major activation tensor laid out as `[n][c][h][w]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor4<T> {
    /// Batch size.
    pub n: usize,
    /// Channels.
    pub c: usize,
    /// Height (mel bins).
    pub h: usize,
    /// Width (frames).
    pub w: usize,
    /// Row-major values, length `n * c * h * w`.
    pub values: Vec<T>,
}

impl<T: Scalar> Tensor4<T> {
    /// Wrap values, checking the count.
    pub fn new(n: usize, c: usize, h: usize, w: usize, values: Vec<T>) -> Result<Self, NnError> {
        if values.len() != n * c * h * w {
            return Err(NnError::BadShape {
                context: "tensor value count does not match its dimensions",
            });
        }
        Ok(Self { n, c, h, w, values })
    }

    /// All-zero tensor.
    pub fn zeros(n: usize, c: usize, h: usize, w: usize) -> Self {
        Self {
            n,
            c,
            h,
            w,
            values: vec![T::zero(); n * c * h * w],
        }
    }

    /// Flat offset of `(n, c, h, w)`.
    #[inline]
    pub fn offset(&self, n: usize, c: usize, h: usize, w: usize) -> usize {
        ((n * self.c + c) * self.h + h) * self.w + w
    }

    /// Value at `(n, c, h, w)`.
    #[inline]
    pub fn at(&self, n: usize, c: usize, h: usize, w: usize) -> T {
        self.values[self.offset(n, c, h, w)]
    }

    /// One sample's `c * h * w` plane.
    pub fn sample(&self, n: usize) -> &[T] {
        let len = self.c * self.h * self.w;
        &self.values[n * len..(n + 1) * len]
    }

    /// Mutable view of one sample's plane.
    pub fn sample_mut(&mut self, n: usize) -> &mut [T] {
        let len = self.c * self.h * self.w;
        &mut self.values[n * len..(n + 1) * len]
    }

    /// True when every value is finite.
    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Convert element type (used to run the same net at f32 and f64).
    pub fn cast<U: Scalar>(&self) -> Tensor4<U> {
        Tensor4 {
            n: self.n,
            c: self.c,
            h: self.h,
            w: self.w,
            values: self
                .values
                .iter()
                .map(|&v| U::from(v.to_f64().unwrap()).unwrap())
                .collect(),
        }
    }
}

/// Whether a tensor is updated by the optimizer or only by the forward pass.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TensorRole {
    /// Weights and biases; receives gradients.
    Trainable,
    /// Running statistics; written during training, never differentiated.
    Buffer,
}

/// One parameter tensor with its gradient accumulator.
#[derive(Clone, Debug, PartialEq)]
pub struct Param<T> {
    dims: Vec<usize>,
    values: Vec<T>,
    grad: Vec<T>,
    frozen: bool,
}

impl<T: Scalar> Param<T> {
    /// Wrap initial values.
    pub fn new(dims: Vec<usize>, values: Vec<T>) -> Self {
        let len = dims.iter().product::<usize>();
        assert_eq!(values.len(), len, "parameter value count mismatch");
        let grad = vec![T::zero(); len];
        Self {
            dims,
            values,
            grad,
            frozen: false,
        }
    }

    /// All-zero parameter.
    pub fn zeros(dims: Vec<usize>) -> Self {
        let len = dims.iter().product::<usize>();
        Self::new(dims, vec![T::zero(); len])
    }

    /// Constant-filled parameter.
    pub fn full(dims: Vec<usize>, value: T) -> Self {
        let len = dims.iter().product::<usize>();
        Self::new(dims, vec![value; len])
    }

    /// Dimension list.
    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    /// Element count.
    pub fn len(&self) -> usize {
        self.values.len()
    }

    /// True when the parameter has no elements.
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Current values.
    pub fn values(&self) -> &[T] {
        &self.values
    }

    /// Mutable values (optimizer updates, checkpoint restore).
    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    /// Accumulated gradient.
    pub fn grad(&self) -> &[T] {
        &self.grad
    }

    /// Clear the gradient accumulator.
    pub fn zero_grad(&mut self) {
        for g in &mut self.grad {
            *g = T::zero();
        }
    }

    /// Add a gradient contribution; a no-op when frozen so excluded tensors
    /// report exactly zero.
    pub fn accumulate(&mut self, contribution: &[T]) {
        if self.frozen {
            return;
        }
        debug_assert_eq!(contribution.len(), self.grad.len());
        for (g, &d) in self.grad.iter_mut().zip(contribution) {
            *g = *g + d;
        }
    }

    /// Mutable gradient view for in-place accumulation; `None` when frozen.
    pub fn grad_mut(&mut self) -> Option<&mut [T]> {
        if self.frozen {
            None
        } else {
            Some(&mut self.grad)
        }
    }

    /// Exclude this tensor from gradient accumulation and optimizer updates.
    pub fn freeze(&mut self) {
        self.frozen = true;
    }

    /// Re-enable updates.
    pub fn unfreeze(&mut self) {
        self.frozen = false;
    }

    /// Whether the tensor is excluded from updates.
    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    /// Convert element type, dropping any accumulated gradient.
    pub fn cast<U: Scalar>(&self) -> Param<U> {
        let mut p = Param::new(
            self.dims.clone(),
            self.values
                .iter()
                .map(|&v| U::from(v.to_f64().unwrap()).unwrap())
                .collect(),
        );
        p.frozen = self.frozen;
        p
    }
}

/// A parameter tensor paired with its stable name and role.
pub struct NamedTensor<'a, T> {
    /// Dotted path, e.g. `stage1.block0.conv1.weight`.
    pub name: String,
    /// Trainable or buffer.
    pub role: TensorRole,
    /// The tensor itself.
    pub param: &'a mut Param<T>,
}

/// `c[m][n] += a[m][k] · b[k][n]`, accumulating into `c`.
///
/// Row-parallel when the `parallel` feature is enabled; each output row is
/// produced by one thread with the same serial inner loops, so results are
/// bitwise identical at any thread count.
pub fn matmul_acc<T: Scalar>(c: &mut [T], a: &[T], b: &[T], m: usize, k: usize, n: usize) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);

    let row = |c_row: &mut [T], a_row: &[T]| {
        for (p, &a_val) in a_row.iter().enumerate() {
            if a_val == T::zero() {
                continue;
            }
            let b_row = &b[p * n..(p + 1) * n];
            for (c_v, &b_v) in c_row.iter_mut().zip(b_row) {
                *c_v = *c_v + a_val * b_v;
            }
        }
    };

    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        if m * k * n > 1 << 16 {
            c.par_chunks_mut(n)
                .zip(a.par_chunks(k))
                .for_each(|(c_row, a_row)| row(c_row, a_row));
            return;
        }
    }
    for (c_row, a_row) in c.chunks_mut(n).zip(a.chunks(k)) {
        row(c_row, a_row);
    }
}

/// `c = a · b` into a fresh buffer.
pub fn matmul<T: Scalar>(a: &[T], b: &[T], m: usize, k: usize, n: usize) -> Vec<T> {
    let mut c = vec![T::zero(); m * n];
    matmul_acc(&mut c, a, b, m, k, n);
    c
}

/// `c[m][n] += a[m][k] · b[n][k]ᵀ` (b given row-major as n×k).
pub fn matmul_abt_acc<T: Scalar>(c: &mut [T], a: &[T], b: &[T], m: usize, k: usize, n: usize) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), n * k);
    debug_assert_eq!(c.len(), m * n);
    for (c_row, a_row) in c.chunks_mut(n).zip(a.chunks(k)) {
        for (c_v, b_row) in c_row.iter_mut().zip(b.chunks(k)) {
            let mut acc = T::zero();
            for (&a_v, &b_v) in a_row.iter().zip(b_row) {
                acc = acc + a_v * b_v;
            }
            *c_v = *c_v + acc;
        }
    }
}

/// `c[m][n] += a[k][m]ᵀ · b[k][n]` (a given row-major as k×m).
pub fn matmul_atb_acc<T: Scalar>(c: &mut [T], a: &[T], b: &[T], m: usize, k: usize, n: usize) {
    debug_assert_eq!(a.len(), k * m);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    for (a_row, b_row) in a.chunks(m).zip(b.chunks(n)) {
        for (i, &a_v) in a_row.iter().enumerate() {
            if a_v == T::zero() {
                continue;
            }
            let c_row = &mut c[i * n..(i + 1) * n];
            for (c_v, &b_v) in c_row.iter_mut().zip(b_row) {
                *c_v = *c_v + a_v * b_v;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeedRng;

    #[test]
    fn tensor_layout_and_validation() {
        let t = Tensor4::new(2, 3, 4, 5, (0..120).map(|i| i as f64).collect()).unwrap();
        assert_eq!(t.at(1, 2, 3, 4), 119.0);
        assert_eq!(t.at(0, 0, 0, 1), 1.0);
        assert_eq!(t.sample(1).len(), 60);
        assert!(Tensor4::new(2, 3, 4, 5, vec![0.0f64; 119]).is_err());
    }

    #[test]
    fn matmul_matches_naive_triple_loop() {
        let mut rng = SeedRng::new(11);
        for &(m, k, n) in &[(1usize, 1usize, 1usize), (3, 4, 5), (17, 9, 13), (32, 64, 48)] {
            let a: Vec<f64> = (0..m * k).map(|_| rng.normal()).collect();
            let b: Vec<f64> = (0..k * n).map(|_| rng.normal()).collect();
            let got = matmul(&a, &b, m, k, n);
            for i in 0..m {
                for j in 0..n {
                    let mut want = 0.0;
                    for p in 0..k {
                        want += a[i * k + p] * b[p * n + j];
                    }
                    assert!((got[i * n + j] - want).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn transposed_matmuls_match_explicit_transposes() {
        let mut rng = SeedRng::new(7);
        let (m, k, n) = (5usize, 6usize, 4usize);
        let a: Vec<f64> = (0..m * k).map(|_| rng.normal()).collect();
        let b: Vec<f64> = (0..k * n).map(|_| rng.normal()).collect();
        let want = matmul(&a, &b, m, k, n);

        // a · b == a · (bᵀ)ᵀ
        let mut bt = vec![0.0; n * k];
        for i in 0..k {
            for j in 0..n {
                bt[j * k + i] = b[i * n + j];
            }
        }
        let mut got = vec![0.0; m * n];
        matmul_abt_acc(&mut got, &a, &bt, m, k, n);
        for (g, w) in got.iter().zip(&want) {
            assert!((g - w).abs() < 1e-12);
        }

        // a · b == (aᵀ)ᵀ · b
        let mut at = vec![0.0; k * m];
        for i in 0..m {
            for j in 0..k {
                at[j * m + i] = a[i * k + j];
            }
        }
        let mut got = vec![0.0; m * n];
        matmul_atb_acc(&mut got, &at, &b, m, k, n);
        for (g, w) in got.iter().zip(&want) {
            assert!((g - w).abs() < 1e-12);
        }
    }

    #[test]
    fn frozen_param_accumulates_nothing() {
        let mut p = Param::new(vec![2, 2], vec![1.0f64; 4]);
        p.accumulate(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(p.grad(), &[1.0, 2.0, 3.0, 4.0]);
        p.freeze();
        p.zero_grad();
        p.accumulate(&[1.0, 2.0, 3.0, 4.0]);
        assert!(p.grad_mut().is_none());
        assert_eq!(p.grad(), &[0.0; 4]);
    }
}
