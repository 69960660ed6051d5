//! Radix-2 FFT over power-of-two lengths.
//!
//! Sized for this crate's needs (2048-point analysis frames, test oracles up
//! to a few hundred thousand samples), with a precomputed twiddle table so
//! repeated transforms of the same length stay cheap.

use alloc::vec;
use alloc::vec::Vec;
#[cfg(not(feature = "std"))]
use num_traits::Float;

/// Precomputed plan for transforms of a fixed power-of-two length.
#[derive(Clone, Debug)]
pub struct Fft {
    n: usize,
    // w[k] = exp(-2*pi*i*k/n) for k < n/2
    tw_re: Vec<f64>,
    tw_im: Vec<f64>,
}

impl Fft {
    /// Plan for length `n`. Panics unless `n` is a power of two and `n >= 2`.
    pub fn new(n: usize) -> Self {
        assert!(n.is_power_of_two() && n >= 2, "FFT length must be a power of two >= 2, got {n}");
        let half = n / 2;
        let mut tw_re = vec![0.0; half];
        let mut tw_im = vec![0.0; half];
        let step = -2.0 * core::f64::consts::PI / n as f64;
        for k in 0..half {
            let a = step * k as f64;
            tw_re[k] = a.cos();
            tw_im[k] = a.sin();
        }
        Self { n, tw_re, tw_im }
    }

    /// Transform size.
    pub fn size(&self) -> usize {
        self.n
    }

    fn transform(&self, re: &mut [f64], im: &mut [f64], inverse: bool) {
        let n = self.n;
        assert_eq!(re.len(), n, "re length {} != plan length {}", re.len(), n);
        assert_eq!(im.len(), n, "im length {} != plan length {}", im.len(), n);

        // Bit-reversal permutation.
        let bits = n.trailing_zeros();
        for i in 0..n {
            let j = i.reverse_bits() >> (usize::BITS - bits);
            if j > i {
                re.swap(i, j);
                im.swap(i, j);
            }
        }

        let mut len = 2;
        while len <= n {
            let half = len / 2;
            let stride = n / len;
            for start in (0..n).step_by(len) {
                for k in 0..half {
                    let (wr, wi) = {
                        let w_im = self.tw_im[k * stride];
                        (self.tw_re[k * stride], if inverse { -w_im } else { w_im })
                    };
                    let i = start + k;
                    let j = i + half;
                    let tr = re[j] * wr - im[j] * wi;
                    let ti = re[j] * wi + im[j] * wr;
                    re[j] = re[i] - tr;
                    im[j] = im[i] - ti;
                    re[i] += tr;
                    im[i] += ti;
                }
            }
            len *= 2;
        }

        if inverse {
            let scale = 1.0 / n as f64;
            for v in re.iter_mut() {
                *v *= scale;
            }
            for v in im.iter_mut() {
                *v *= scale;
            }
        }
    }

    /// In-place forward DFT.
    pub fn forward(&self, re: &mut [f64], im: &mut [f64]) {
        self.transform(re, im, false);
    }

    /// In-place inverse DFT (normalized by `1/n`).
    pub fn inverse(&self, re: &mut [f64], im: &mut [f64]) {
        self.transform(re, im, true);
    }
}

/// Index of the dominant nonnegative-frequency bin of a real signal, and the
/// corresponding frequency in Hz. The signal is zero-padded to the next power
/// of two. DC is excluded. Used by tests and the simulator's self-checks as a
/// peak-frequency oracle.
pub fn dominant_frequency_hz(samples: &[f64], sample_rate_hz: f64) -> f64 {
    assert!(samples.len() >= 4, "need at least 4 samples");
    let n = samples.len().next_power_of_two().max(4);
    let mut re = vec![0.0; n];
    let mut im = vec![0.0; n];
    re[..samples.len()].copy_from_slice(samples);
    Fft::new(n).forward(&mut re, &mut im);
    let mut best = 1;
    let mut best_p = f64::NEG_INFINITY;
    for k in 1..=n / 2 {
        let p = re[k] * re[k] + im[k] * im[k];
        if p > best_p {
            best_p = p;
            best = k;
        }
    }
    best as f64 * sample_rate_hz / n as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeedRng;

    // O(n^2) reference DFT, kept deliberately independent of the FFT above.
    fn naive_dft(re: &[f64], im: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let n = re.len();
        let mut or = vec![0.0; n];
        let mut oi = vec![0.0; n];
        for k in 0..n {
            for t in 0..n {
                let a = -2.0 * core::f64::consts::PI * (k * t) as f64 / n as f64;
                let (c, s) = (a.cos(), a.sin());
                or[k] += re[t] * c - im[t] * s;
                oi[k] += re[t] * s + im[t] * c;
            }
        }
        (or, oi)
    }

    #[test]
    fn matches_naive_dft() {
        let mut rng = SeedRng::new(5);
        for &n in &[4usize, 16, 64, 256] {
            let re: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
            let im: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
            let (er, ei) = naive_dft(&re, &im);
            let mut ar = re.clone();
            let mut ai = im.clone();
            Fft::new(n).forward(&mut ar, &mut ai);
            for k in 0..n {
                assert!((ar[k] - er[k]).abs() < 1e-9, "n={n} k={k} re");
                assert!((ai[k] - ei[k]).abs() < 1e-9, "n={n} k={k} im");
            }
        }
    }

    #[test]
    fn roundtrip_identity() {
        let mut rng = SeedRng::new(9);
        let n = 1024;
        let re: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
        let im: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
        let plan = Fft::new(n);
        let mut ar = re.clone();
        let mut ai = im.clone();
        plan.forward(&mut ar, &mut ai);
        plan.inverse(&mut ar, &mut ai);
        for k in 0..n {
            assert!((ar[k] - re[k]).abs() < 1e-10);
            assert!((ai[k] - im[k]).abs() < 1e-10);
        }
    }

    #[test]
    fn parseval_energy() {
        let mut rng = SeedRng::new(13);
        let n = 512;
        let re: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
        let im = vec![0.0; n];
        let time_energy: f64 = re.iter().map(|x| x * x).sum();
        let mut ar = re.clone();
        let mut ai = im.clone();
        Fft::new(n).forward(&mut ar, &mut ai);
        let freq_energy: f64 =
            ar.iter().zip(&ai).map(|(r, i)| r * r + i * i).sum::<f64>() / n as f64;
        assert!((time_energy - freq_energy).abs() / time_energy < 1e-12);
    }

    #[test]
    fn pure_tone_peak() {
        let rate = 40_000.0;
        let n = 8192;
        let f0 = 1_000.0;
        let samples: Vec<f64> = (0..n)
            .map(|i| (2.0 * core::f64::consts::PI * f0 * i as f64 / rate).sin())
            .collect();
        let peak = dominant_frequency_hz(&samples, rate);
        assert!((peak - f0).abs() <= rate / n as f64, "peak {peak}");
    }
}
