//! Sliding-window slicing and mel-spectrogram featurization.
//!
//! The canonical configuration is 100 ms windows advancing 25 ms (75%
//! overlap); each window is featurized independently into a 128-band mel
//! spectrogram (hop 32 samples, 2 kHz ceiling) so that a 100 ms window at
//! the canonical 40 kHz rate yields a 128x126 dB matrix.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
#[cfg(not(feature = "std"))]
use num_traits::Float;

use crate::fft::Fft;

/// Sliding-window geometry in milliseconds.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WindowSpec {
    /// Window length, ms.
    pub length_ms: f64,
    /// Step between window starts, ms.
    pub step_ms: f64,
}

impl Default for WindowSpec {
    fn default() -> Self {
        Self {
            length_ms: 100.0,
            step_ms: 25.0,
        }
    }
}

/// One window's placement within a channel.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct WindowSlice {
    /// Zero-based window index.
    pub index: usize,
    /// First sample of the window.
    pub start_sample: usize,
    /// Window length in samples.
    pub len_samples: usize,
}

impl WindowSlice {
    /// Window start in milliseconds.
    pub fn start_ms(&self, sample_rate_hz: f64) -> f64 {
        self.start_sample as f64 / sample_rate_hz * 1000.0
    }
}

/// Positions of all complete windows over a channel of `n_samples`.
///
/// Only windows that fit entirely inside the recording are produced:
/// `floor((duration - length) / step) + 1` of them, or none when the
/// recording is shorter than one window.
pub fn slice_windows(
    n_samples: usize,
    sample_rate_hz: f64,
    spec: &WindowSpec,
) -> Result<Vec<WindowSlice>, DspError> {
    if !(sample_rate_hz.is_finite() && sample_rate_hz > 0.0) {
        return Err(DspError::InvalidParam("sample rate must be positive"));
    }
    if !(spec.length_ms.is_finite() && spec.length_ms > 0.0) {
        return Err(DspError::InvalidParam("window length must be positive"));
    }
    if !(spec.step_ms.is_finite() && spec.step_ms > 0.0) {
        return Err(DspError::InvalidParam("window step must be positive"));
    }
    let len = (spec.length_ms * sample_rate_hz / 1000.0).round() as usize;
    let step = (spec.step_ms * sample_rate_hz / 1000.0).round() as usize;
    if len == 0 || step == 0 {
        return Err(DspError::InvalidParam(
            "window length and step must be at least one sample",
        ));
    }
    if n_samples < len {
        return Ok(Vec::new());
    }
    let count = (n_samples - len) / step + 1;
    Ok((0..count)
        .map(|index| WindowSlice {
            index,
            start_sample: index * step,
            len_samples: len,
        })
        .collect())
}

/// Mel-spectrogram parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MelParams {
    /// Sample rate of the input window, Hz.
    pub sample_rate_hz: f64,
    /// Analysis frame length (power of two).
    pub n_fft: usize,
    /// Hop between analysis frames, samples.
    pub hop: usize,
    /// Number of mel bands.
    pub n_mels: usize,
    /// Lowest band edge, Hz.
    pub f_min: f64,
    /// Highest band edge, Hz.
    pub f_max: f64,
    /// Floor applied after max-referenced dB conversion.
    pub floor_db: f64,
}

impl Default for MelParams {
    fn default() -> Self {
        Self {
            sample_rate_hz: 40_000.0,
            n_fft: 2048,
            hop: 32,
            n_mels: 128,
            f_min: 0.0,
            f_max: 2_000.0,
            floor_db: -80.0,
        }
    }
}

/// Hz to mel (Slaney scale: linear below 1 kHz, logarithmic above).
pub fn hz_to_mel(hz: f64) -> f64 {
    const F_SP: f64 = 200.0 / 3.0;
    const MIN_LOG_HZ: f64 = 1_000.0;
    const MIN_LOG_MEL: f64 = MIN_LOG_HZ / F_SP;
    if hz >= MIN_LOG_HZ {
        let logstep = (6.4f64).ln() / 27.0;
        MIN_LOG_MEL + (hz / MIN_LOG_HZ).ln() / logstep
    } else {
        hz / F_SP
    }
}

/// Mel to Hz, inverse of [`hz_to_mel`].
pub fn mel_to_hz(mel: f64) -> f64 {
    const F_SP: f64 = 200.0 / 3.0;
    const MIN_LOG_HZ: f64 = 1_000.0;
    const MIN_LOG_MEL: f64 = MIN_LOG_HZ / F_SP;
    if mel >= MIN_LOG_MEL {
        let logstep = (6.4f64).ln() / 27.0;
        MIN_LOG_HZ * ((mel - MIN_LOG_MEL) * logstep).exp()
    } else {
        F_SP * mel
    }
}

/// Triangular mel filterbank with area normalization.
#[derive(Clone, Debug)]
pub struct FilterBank {
    n_mels: usize,
    n_bins: usize,
    // Row-major n_mels x n_bins.
    weights: Vec<f64>,
    // Per-filter [start, end) of nonzero bins, for sparse application.
    support: Vec<(usize, usize)>,
    centers_hz: Vec<f64>,
}

impl FilterBank {
    /// Bands.
    pub fn n_mels(&self) -> usize {
        self.n_mels
    }

    /// Spectrum bins covered (`n_fft/2 + 1`).
    pub fn n_bins(&self) -> usize {
        self.n_bins
    }

    /// Weight of filter `m` at bin `k`.
    pub fn weight(&self, m: usize, k: usize) -> f64 {
        self.weights[m * self.n_bins + k]
    }

    /// Filter center frequencies in Hz, strictly increasing.
    pub fn centers_hz(&self) -> &[f64] {
        &self.centers_hz
    }

    /// Apply to a power spectrum (`n_bins` values), writing `n_mels` band
    /// powers.
    pub fn apply(&self, power: &[f64], out: &mut [f64]) {
        debug_assert_eq!(power.len(), self.n_bins);
        debug_assert_eq!(out.len(), self.n_mels);
        for (m, o) in out.iter_mut().enumerate() {
            let (lo, hi) = self.support[m];
            let row = &self.weights[m * self.n_bins..(m + 1) * self.n_bins];
            let mut acc = 0.0;
            for k in lo..hi {
                acc += row[k] * power[k];
            }
            *o = acc;
        }
    }
}

/// Build the triangular filterbank described by `params`.
///
/// Filters are laid out uniformly on the Slaney mel scale between `f_min`
/// and `f_max` and area-normalized (each triangle scaled by
/// `2 / (upper_edge - lower_edge)`). Construction fails if any filter would
/// be empty at the given FFT resolution, since an all-zero band silently
/// discards spectrum.
pub fn mel_filterbank(params: &MelParams) -> Result<FilterBank, DspError> {
    validate_mel_params(params)?;
    let n_bins = params.n_fft / 2 + 1;
    let n_mels = params.n_mels;

    let mel_lo = hz_to_mel(params.f_min);
    let mel_hi = hz_to_mel(params.f_max);
    let edges_hz: Vec<f64> = (0..n_mels + 2)
        .map(|i| mel_to_hz(mel_lo + (mel_hi - mel_lo) * i as f64 / (n_mels + 1) as f64))
        .collect();
    for w in edges_hz.windows(2) {
        // NaN edges must fail this guard too.
        #[allow(clippy::neg_cmp_op_on_partial_ord)]
        if !(w[1] > w[0]) {
            return Err(DspError::InvalidParam(
                "mel band edges collapsed; widen the frequency range or reduce n_mels",
            ));
        }
    }

    let mut weights = vec![0.0; n_mels * n_bins];
    let mut support = Vec::with_capacity(n_mels);
    let bin_hz = params.sample_rate_hz / params.n_fft as f64;
    for m in 0..n_mels {
        let (lower, center, upper) = (edges_hz[m], edges_hz[m + 1], edges_hz[m + 2]);
        let enorm = 2.0 / (upper - lower);
        let mut lo_bin = n_bins;
        let mut hi_bin = 0;
        for k in 0..n_bins {
            let f = k as f64 * bin_hz;
            let up = (f - lower) / (center - lower);
            let down = (upper - f) / (upper - center);
            let w = up.min(down).max(0.0);
            if w > 0.0 {
                weights[m * n_bins + k] = w * enorm;
                lo_bin = lo_bin.min(k);
                hi_bin = hi_bin.max(k + 1);
            }
        }
        if lo_bin >= hi_bin {
            return Err(DspError::EmptyFilter { filter: m });
        }
        support.push((lo_bin, hi_bin));
    }

    Ok(FilterBank {
        n_mels,
        n_bins,
        weights,
        support,
        centers_hz: edges_hz[1..=n_mels].to_vec(),
    })
}

fn validate_mel_params(params: &MelParams) -> Result<(), DspError> {
    if !(params.sample_rate_hz.is_finite() && params.sample_rate_hz > 0.0) {
        return Err(DspError::InvalidParam("sample rate must be positive"));
    }
    if !params.n_fft.is_power_of_two() || params.n_fft < 16 {
        return Err(DspError::InvalidParam("n_fft must be a power of two >= 16"));
    }
    if params.hop == 0 {
        return Err(DspError::InvalidParam("hop must be at least one sample"));
    }
    if params.n_mels == 0 {
        return Err(DspError::InvalidParam("n_mels must be at least 1"));
    }
    if !(params.f_min >= 0.0 && params.f_max > params.f_min) {
        return Err(DspError::InvalidParam("need 0 <= f_min < f_max"));
    }
    if params.f_max > params.sample_rate_hz / 2.0 {
        return Err(DspError::InvalidParam("f_max exceeds the Nyquist frequency"));
    }
    // NaN must fail this guard too.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    if !(params.floor_db < 0.0) {
        return Err(DspError::InvalidParam("floor_db must be negative"));
    }
    Ok(())
}

/// Mel spectrogram in dB, row-major `n_mels x n_frames`.
#[derive(Clone, Debug, PartialEq)]
pub struct MelSpectrogram {
    /// Bands (rows).
    pub n_mels: usize,
    /// Analysis frames (columns).
    pub n_frames: usize,
    /// Row-major dB values; all `<= 0` and `>= floor_db`.
    pub values: Vec<f32>,
}

impl MelSpectrogram {
    /// Value at band `m`, frame `t`.
    pub fn at(&self, m: usize, t: usize) -> f32 {
        self.values[m * self.n_frames + t]
    }
}

/// Number of centered analysis frames for an input of `n` samples.
pub fn frame_count(n: usize, hop: usize) -> usize {
    n / hop + 1
}

/// Featurize one window of samples into a mel spectrogram.
///
/// Frames are centered (reflect padding of `n_fft/2` on both sides), each
/// weighted by a periodic Hann window, and the power spectrum is pooled by
/// [`mel_filterbank`]. Band powers are converted to dB referenced to the
/// window's own maximum, then floored at `params.floor_db`; every output
/// value sits in `[floor_db, 0]`, and an all-zero window comes out entirely
/// at the floor. Output depends only on the inputs, bit for bit.
pub fn mel_spectrogram(samples: &[f32], params: &MelParams) -> Result<MelSpectrogram, DspError> {
    let bank = mel_filterbank(params)?;
    mel_spectrogram_with(samples, params, &bank)
}

/// [`mel_spectrogram`] with a prebuilt filterbank, for callers featurizing
/// many windows with the same parameters.
pub fn mel_spectrogram_with(
    samples: &[f32],
    params: &MelParams,
    bank: &FilterBank,
) -> Result<MelSpectrogram, DspError> {
    validate_mel_params(params)?;
    if bank.n_mels != params.n_mels || bank.n_bins != params.n_fft / 2 + 1 {
        return Err(DspError::InvalidParam("filterbank does not match params"));
    }
    let n = samples.len();
    if n < 2 {
        return Err(DspError::InputTooShort {
            got: n,
            minimum: 2,
        });
    }

    let n_fft = params.n_fft;
    let pad = n_fft / 2;
    let n_frames = frame_count(n, params.hop);
    let n_bins = n_fft / 2 + 1;

    // Periodic Hann.
    let window: Vec<f64> = (0..n_fft)
        .map(|i| 0.5 - 0.5 * (2.0 * core::f64::consts::PI * i as f64 / n_fft as f64).cos())
        .collect();

    let plan = Fft::new(n_fft);
    let mut re = vec![0.0f64; n_fft];
    let mut im = vec![0.0f64; n_fft];
    let mut power = vec![0.0f64; n_bins];
    let mut band = vec![0.0f64; params.n_mels];
    let mut mel_power = vec![0.0f64; params.n_mels * n_frames];

    for t in 0..n_frames {
        let start = t as isize * params.hop as isize - pad as isize;
        for i in 0..n_fft {
            let src = reflect_index(start + i as isize, n);
            re[i] = samples[src] as f64 * window[i];
            im[i] = 0.0;
        }
        plan.forward(&mut re, &mut im);
        for k in 0..n_bins {
            power[k] = re[k] * re[k] + im[k] * im[k];
        }
        bank.apply(&power, &mut band);
        for m in 0..params.n_mels {
            mel_power[m * n_frames + t] = band[m];
        }
    }

    let reference = mel_power.iter().copied().fold(0.0f64, f64::max);
    let values: Vec<f32> = if reference > 0.0 {
        mel_power
            .iter()
            .map(|&p| (10.0 * (p / reference).log10()).max(params.floor_db) as f32)
            .collect()
    } else {
        vec![params.floor_db as f32; mel_power.len()]
    };

    Ok(MelSpectrogram {
        n_mels: params.n_mels,
        n_frames,
        values,
    })
}

/// Reflect (bounce) indexing without edge repetition, as used for centered
/// framing: `-1 -> 1`, `n -> n-2`, continuing periodically.
pub(crate) fn reflect_index(i: isize, n: usize) -> usize {
    debug_assert!(n >= 2);
    let period = 2 * (n as isize - 1);
    let mut j = i.rem_euclid(period);
    if j >= n as isize {
        j = period - j;
    }
    j as usize
}

/// Errors from windowing and featurization.
#[derive(Clone, Debug, PartialEq)]
pub enum DspError {
    /// A parameter fails validation; the message says which.
    InvalidParam(&'static str),
    /// Input shorter than the minimum the transform supports.
    InputTooShort {
        /// Samples provided.
        got: usize,
        /// Samples required.
        minimum: usize,
    },
    /// A mel filter covers no FFT bins at this resolution.
    EmptyFilter {
        /// Index of the empty filter.
        filter: usize,
    },
}

impl fmt::Display for DspError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DspError::InvalidParam(msg) => write!(f, "invalid parameter: {msg}"),
            DspError::InputTooShort { got, minimum } => {
                write!(f, "input has {got} samples, need at least {minimum}")
            }
            DspError::EmptyFilter { filter } => write!(
                f,
                "mel filter {filter} covers no FFT bins; increase n_fft or widen the band"
            ),
        }
    }
}

impl core::error::Error for DspError {}
