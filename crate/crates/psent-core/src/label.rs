//! Window labeling, breach-class augmentation, and multi-sensor fusion.
//!
//! A located breach instant becomes a [`BreachInterval`]; analysis windows
//! overlapping that interval by at least a configurable fraction are labeled
//! breach, the rest non-breach. Because breach windows are rare, the training
//! split's breach class is expanded ninefold by gain and pitch-shift variants
//! of the raw audio before featurization. Spectrograms from several sensors
//! of one window stack into a single multi-channel network input.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
#[cfg(not(feature = "std"))]
use num_traits::Float;

use crate::dsp::{reflect_index, MelSpectrogram, WindowSlice};
use crate::fft::Fft;
use crate::signal::{resample_f64, SensorKind, SessionMeta, SignalError};

/// Gain variants applied to each breach training window, dB.
pub const GAIN_VARIANTS_DB: [f64; 4] = [-5.0, -3.0, 3.0, 5.0];

/// Pitch-shift variants applied to each breach training window, semitones.
pub const PITCH_VARIANTS_SEMITONES: [i32; 4] = [-2, -1, 1, 2];

/// Shortest admissible breach event, ms.
pub const MIN_BREACH_MS: f64 = 100.0;
/// Longest admissible breach event, ms.
pub const MAX_BREACH_MS: f64 = 300.0;

/// A breach event on the recording clock. Duration is validated against the
/// physical range of cortical breakthrough transients.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BreachInterval {
    start_ms: f64,
    end_ms: f64,
}

impl BreachInterval {
    /// Validate and build: finite endpoints, duration in
    /// `[MIN_BREACH_MS, MAX_BREACH_MS]`.
    pub fn new(start_ms: f64, end_ms: f64) -> Result<Self, LabelError> {
        let dur = end_ms - start_ms;
        if !(start_ms.is_finite() && end_ms.is_finite())
            || !(MIN_BREACH_MS..=MAX_BREACH_MS).contains(&dur)
        {
            return Err(LabelError::InvalidInterval { start_ms, end_ms });
        }
        Ok(Self { start_ms, end_ms })
    }

    /// Interval start, ms.
    pub fn start_ms(&self) -> f64 {
        self.start_ms
    }

    /// Interval end, ms.
    pub fn end_ms(&self) -> f64 {
        self.end_ms
    }

    /// Interval duration, ms.
    pub fn duration_ms(&self) -> f64 {
        self.end_ms - self.start_ms
    }

    /// Length of the overlap with `[start, end)`, ms (zero when disjoint).
    pub fn overlap_ms(&self, start_ms: f64, end_ms: f64) -> f64 {
        (self.end_ms.min(end_ms) - self.start_ms.max(start_ms)).max(0.0)
    }
}

/// Binary window class.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum WindowLabel {
    /// Window contains the breach event.
    Breach,
    /// Window does not contain the breach event.
    NonBreach,
}

impl WindowLabel {
    /// True for [`WindowLabel::Breach`].
    pub fn is_breach(&self) -> bool {
        matches!(self, WindowLabel::Breach)
    }

    /// Stable lowercase name.
    pub fn as_str(&self) -> &'static str {
        match self {
            WindowLabel::Breach => "breach",
            WindowLabel::NonBreach => "non_breach",
        }
    }

    /// Parse the name produced by [`WindowLabel::as_str`].
    pub fn parse(s: &str) -> Result<Self, LabelError> {
        match s {
            "breach" => Ok(WindowLabel::Breach),
            "non_breach" => Ok(WindowLabel::NonBreach),
            _ => Err(LabelError::UnknownLabel),
        }
    }
}

impl fmt::Display for WindowLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Label every window against a breach interval: a window is breach when its
/// temporal overlap with the interval is at least `overlap_frac` of the
/// window length (boundary counts as breach). `None` labels everything
/// non-breach. Enlarging the interval can only add breach labels.
pub fn label_windows(
    windows: &[WindowSlice],
    sample_rate_hz: f64,
    interval: Option<&BreachInterval>,
    overlap_frac: f64,
) -> Result<Vec<WindowLabel>, LabelError> {
    if !(overlap_frac.is_finite() && overlap_frac > 0.0 && overlap_frac <= 1.0) {
        return Err(LabelError::InvalidOverlapFraction(overlap_frac));
    }
    if !(sample_rate_hz.is_finite() && sample_rate_hz > 0.0) {
        return Err(LabelError::Signal(SignalError::InvalidSampleRate(
            sample_rate_hz,
        )));
    }
    Ok(windows
        .iter()
        .map(|w| {
            let start = w.start_ms(sample_rate_hz);
            let len_ms = w.len_samples as f64 / sample_rate_hz * 1000.0;
            match interval {
                Some(iv) if iv.overlap_ms(start, start + len_ms) >= overlap_frac * len_ms => {
                    WindowLabel::Breach
                }
                _ => WindowLabel::NonBreach,
            }
        })
        .collect())
}

/// Scale samples by `10^(gain_db/20)`. No clipping is applied; callers keep
/// values as reals until featurization.
pub fn gain_augment(samples: &[f64], gain_db: f64) -> Vec<f64> {
    assert!(gain_db.is_finite(), "gain must be finite");
    let g = 10.0f64.powf(gain_db / 20.0);
    samples.iter().map(|&x| x * g).collect()
}

/// Analysis frame of the pitch-shift phase vocoder; also the minimum window
/// length the operation accepts.
pub const PITCH_SHIFT_MIN_SAMPLES: usize = 1024;
const PV_N_FFT: usize = PITCH_SHIFT_MIN_SAMPLES;
const PV_HOP: usize = PV_N_FFT / 4;

/// Shift pitch by whole semitones at constant length: a phase-vocoder time
/// stretch by `2^(-semitones/12)` followed by band-limited resampling back to
/// the original length. Frequencies scale by `2^(semitones/12)`.
pub fn pitch_shift(
    samples: &[f64],
    semitones: i32,
    sample_rate_hz: f64,
) -> Result<Vec<f64>, LabelError> {
    if !(sample_rate_hz.is_finite() && sample_rate_hz > 0.0) {
        return Err(LabelError::Signal(SignalError::InvalidSampleRate(
            sample_rate_hz,
        )));
    }
    if samples.len() < PITCH_SHIFT_MIN_SAMPLES {
        return Err(LabelError::WindowTooShort {
            got: samples.len(),
            minimum: PITCH_SHIFT_MIN_SAMPLES,
        });
    }
    if semitones == 0 {
        return Ok(samples.to_vec());
    }
    let rate = 2.0f64.powf(-(semitones as f64) / 12.0);
    let stretched = time_stretch(samples, rate);
    let mut out = resample_f64(&stretched, sample_rate_hz / rate, sample_rate_hz)?;
    out.resize(samples.len(), 0.0);
    Ok(out)
}

/// Phase-vocoder time stretch: output plays the same content over
/// `1/rate` times the input duration at unchanged pitch.
fn time_stretch(samples: &[f64], rate: f64) -> Vec<f64> {
    let n = samples.len();
    let pad = PV_N_FFT / 2;
    let padded_len = n + 2 * pad;
    let n_frames = (padded_len - PV_N_FFT) / PV_HOP + 1;

    let hann: Vec<f64> = (0..PV_N_FFT)
        .map(|i| 0.5 - 0.5 * (core::f64::consts::TAU * i as f64 / PV_N_FFT as f64).cos())
        .collect();
    let fft = Fft::new(PV_N_FFT);

    // Centered analysis STFT over reflect-padded input.
    let sample_at = |idx: isize| samples[reflect_index(idx - pad as isize, n)];
    let mut spec_re = Vec::with_capacity(n_frames);
    let mut spec_im = Vec::with_capacity(n_frames);
    for f in 0..n_frames {
        let mut re: Vec<f64> = (0..PV_N_FFT)
            .map(|i| sample_at((f * PV_HOP + i) as isize) * hann[i])
            .collect();
        let mut im = alloc::vec![0.0f64; PV_N_FFT];
        fft.forward(&mut re, &mut im);
        spec_re.push(re);
        spec_im.push(im);
    }

    // Resample the frame sequence at `rate`, accumulating phase so each
    // bin's instantaneous frequency is preserved.
    let expected: Vec<f64> = (0..PV_N_FFT)
        .map(|k| core::f64::consts::TAU * PV_HOP as f64 * k as f64 / PV_N_FFT as f64)
        .collect();
    let mut phase: Vec<f64> = (0..PV_N_FFT)
        .map(|k| spec_im[0][k].atan2(spec_re[0][k]))
        .collect();

    let mut out_frames_re: Vec<Vec<f64>> = Vec::new();
    let mut out_frames_im: Vec<Vec<f64>> = Vec::new();
    let mut t = 0.0f64;
    while t < n_frames as f64 {
        let i0 = t as usize;
        let i1 = (i0 + 1).min(n_frames - 1);
        let frac = t - i0 as f64;
        let mut re = Vec::with_capacity(PV_N_FFT);
        let mut im = Vec::with_capacity(PV_N_FFT);
        for k in 0..PV_N_FFT {
            let m0 = (spec_re[i0][k] * spec_re[i0][k] + spec_im[i0][k] * spec_im[i0][k]).sqrt();
            let m1 = (spec_re[i1][k] * spec_re[i1][k] + spec_im[i1][k] * spec_im[i1][k]).sqrt();
            let mag = (1.0 - frac) * m0 + frac * m1;
            re.push(mag * phase[k].cos());
            im.push(mag * phase[k].sin());
        }
        for k in 0..PV_N_FFT {
            let a0 = spec_im[i0][k].atan2(spec_re[i0][k]);
            let a1 = spec_im[i1][k].atan2(spec_re[i1][k]);
            let mut dev = a1 - a0 - expected[k];
            dev -= core::f64::consts::TAU * (dev / core::f64::consts::TAU).round();
            phase[k] += expected[k] + dev;
        }
        out_frames_re.push(re);
        out_frames_im.push(im);
        t += rate;
    }

    // Overlap-add synthesis normalized by the summed squared window.
    let n_out_frames = out_frames_re.len();
    let total = (n_out_frames - 1) * PV_HOP + PV_N_FFT;
    let mut acc = alloc::vec![0.0f64; total];
    let mut env = alloc::vec![0.0f64; total];
    for f in 0..n_out_frames {
        let (re, im) = (&mut out_frames_re[f], &mut out_frames_im[f]);
        fft.inverse(re, im);
        for i in 0..PV_N_FFT {
            acc[f * PV_HOP + i] += re[i] * hann[i];
            env[f * PV_HOP + i] += hann[i] * hann[i];
        }
    }
    for (a, &e) in acc.iter_mut().zip(env.iter()) {
        if e > 1e-12 {
            *a /= e;
        }
    }
    // Trim the analysis padding; keep the naturally stretched length.
    // total >= PV_N_FFT = 2 * pad, so the slice is always valid.
    acc[pad..total - pad].to_vec()
}

/// Provenance of one training window variant.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Augmentation {
    /// Unmodified recording.
    None,
    /// Gain variant, dB.
    GainDb(f64),
    /// Pitch-shift variant, semitones.
    PitchSemitones(i32),
}

impl Augmentation {
    /// True for any variant other than the original.
    pub fn is_augmented(&self) -> bool {
        !matches!(self, Augmentation::None)
    }
}

/// One analysis window's raw audio across sensors, before featurization.
#[derive(Clone, Debug)]
pub struct RawWindow {
    /// Drilling session this window came from.
    pub session: SessionMeta,
    /// Window start on the recording clock, ms.
    pub start_ms: f64,
    /// Window class.
    pub label: WindowLabel,
    /// Sensor of each channel, aligned with `channels`.
    pub sensors: Vec<SensorKind>,
    /// Raw samples per sensor, all the same length.
    pub channels: Vec<Vec<f32>>,
    /// How this window was derived.
    pub augmentation: Augmentation,
}

/// Expand the breach class of a training set: every breach window yields the
/// original plus four gain variants ([`GAIN_VARIANTS_DB`]) and four
/// pitch-shift variants ([`PITCH_VARIANTS_SEMITONES`]), nine windows total,
/// applied to every channel. Non-breach windows pass through untouched.
/// Output order is input order with variants grouped after their original,
/// so results are deterministic.
pub fn augment_breach_class(
    windows: &[RawWindow],
    sample_rate_hz: f64,
) -> Result<Vec<RawWindow>, LabelError> {
    let mut out = Vec::with_capacity(windows.len());
    for w in windows {
        if w.augmentation.is_augmented() {
            return Err(LabelError::AlreadyAugmented);
        }
        if w.sensors.len() != w.channels.len() {
            return Err(LabelError::ChannelCountMismatch {
                expected: w.sensors.len(),
                got: w.channels.len(),
            });
        }
        out.push(w.clone());
        if !w.label.is_breach() {
            continue;
        }
        let wide: Vec<Vec<f64>> = w
            .channels
            .iter()
            .map(|ch| ch.iter().map(|&x| x as f64).collect())
            .collect();
        for &db in &GAIN_VARIANTS_DB {
            let mut v = w.clone();
            v.augmentation = Augmentation::GainDb(db);
            v.channels = wide
                .iter()
                .map(|ch| gain_augment(ch, db).into_iter().map(|x| x as f32).collect())
                .collect();
            out.push(v);
        }
        for &st in &PITCH_VARIANTS_SEMITONES {
            let mut v = w.clone();
            v.augmentation = Augmentation::PitchSemitones(st);
            v.channels = wide
                .iter()
                .map(|ch| {
                    pitch_shift(ch, st, sample_rate_hz)
                        .map(|s| s.into_iter().map(|x| x as f32).collect())
                })
                .collect::<Result<_, _>>()?;
            out.push(v);
        }
    }
    Ok(out)
}

/// Multi-channel spectrogram tensor, shape `C x n_mels x n_frames`,
/// C-contiguous.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectroStack {
    channels: usize,
    n_mels: usize,
    n_frames: usize,
    values: Vec<f32>,
}

impl SpectroStack {
    /// Channel count.
    pub fn channels(&self) -> usize {
        self.channels
    }

    /// Bands per channel.
    pub fn n_mels(&self) -> usize {
        self.n_mels
    }

    /// Frames per channel.
    pub fn n_frames(&self) -> usize {
        self.n_frames
    }

    /// Value at channel `c`, band `m`, frame `t`.
    pub fn at(&self, c: usize, m: usize, t: usize) -> f32 {
        self.values[(c * self.n_mels + m) * self.n_frames + t]
    }

    /// Flat values, channel-major.
    pub fn values(&self) -> &[f32] {
        &self.values
    }

    /// Rebuild the per-sensor spectrograms, bitwise.
    pub fn unstack(&self) -> Vec<MelSpectrogram> {
        let per = self.n_mels * self.n_frames;
        (0..self.channels)
            .map(|c| MelSpectrogram {
                n_mels: self.n_mels,
                n_frames: self.n_frames,
                values: self.values[c * per..(c + 1) * per].to_vec(),
            })
            .collect()
    }
}

/// Stack per-sensor spectrograms of one window along a channel axis, in the
/// given order. All inputs must share one shape.
pub fn fuse(spectra: &[MelSpectrogram]) -> Result<SpectroStack, LabelError> {
    let first = spectra.first().ok_or(LabelError::EmptyFusion)?;
    let shape = (first.n_mels, first.n_frames);
    let mut values = Vec::with_capacity(spectra.len() * first.values.len());
    for s in spectra {
        if (s.n_mels, s.n_frames) != shape {
            return Err(LabelError::ShapeMismatch {
                expected: shape,
                got: (s.n_mels, s.n_frames),
            });
        }
        values.extend_from_slice(&s.values);
    }
    Ok(SpectroStack {
        channels: spectra.len(),
        n_mels: shape.0,
        n_frames: shape.1,
        values,
    })
}

/// Everything the classifier needs to know about one window.
#[derive(Clone, Debug)]
pub struct WindowMeta {
    /// Drilling session.
    pub session: SessionMeta,
    /// Window start on the recording clock, ms.
    pub start_ms: f64,
    /// Sensors fused into the tensor, in channel order.
    pub sensors: Vec<SensorKind>,
    /// How this window was derived.
    pub augmentation: Augmentation,
}

/// A featurized, labeled training example.
#[derive(Clone, Debug)]
pub struct LabeledWindow {
    /// Fused spectrogram tensor.
    pub spectra: SpectroStack,
    /// Window class.
    pub label: WindowLabel,
    /// Provenance.
    pub meta: WindowMeta,
}

/// Per-class example counts.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ClassCounts {
    /// Breach examples.
    pub breach: usize,
    /// Non-breach examples.
    pub non_breach: usize,
}

/// Count classes over a list of windows.
pub fn class_counts(windows: &[LabeledWindow]) -> ClassCounts {
    let mut c = ClassCounts::default();
    for w in windows {
        match w.label {
            WindowLabel::Breach => c.breach += 1,
            WindowLabel::NonBreach => c.non_breach += 1,
        }
    }
    c
}

/// Train/validation/test partition of labeled windows.
#[derive(Clone, Debug, Default)]
pub struct DatasetSplit {
    /// Training examples (the only split that may contain augmentations).
    pub train: Vec<LabeledWindow>,
    /// Validation examples.
    pub val: Vec<LabeledWindow>,
    /// Held-out test examples.
    pub test: Vec<LabeledWindow>,
}

impl DatasetSplit {
    /// Per-class counts for (train, val, test).
    pub fn counts(&self) -> [ClassCounts; 3] {
        [
            class_counts(&self.train),
            class_counts(&self.val),
            class_counts(&self.test),
        ]
    }

    /// Check structural invariants: augmented windows only in train, channel
    /// axis consistent with the sensor list, and no (session, window start)
    /// appearing in more than one split.
    pub fn validate(&self) -> Result<(), LabelError> {
        use alloc::collections::BTreeSet;
        let splits: [(&'static str, &[LabeledWindow]); 3] = [
            ("train", &self.train),
            ("val", &self.val),
            ("test", &self.test),
        ];
        let mut seen: BTreeSet<(String, u64)> = BTreeSet::new();
        let mut owner: alloc::collections::BTreeMap<(String, u64), &'static str> =
            alloc::collections::BTreeMap::new();
        for (name, windows) in splits {
            let mut here: BTreeSet<(String, u64)> = BTreeSet::new();
            for w in windows {
                if w.meta.augmentation.is_augmented() && name != "train" {
                    return Err(LabelError::AugmentedOutsideTrain { split: name });
                }
                if w.spectra.channels() != w.meta.sensors.len() || w.meta.sensors.is_empty() {
                    return Err(LabelError::ChannelCountMismatch {
                        expected: w.meta.sensors.len(),
                        got: w.spectra.channels(),
                    });
                }
                here.insert((w.meta.session.key(), w.meta.start_ms.to_bits()));
            }
            for k in here {
                if seen.contains(&k) {
                    return Err(LabelError::DuplicateWindow {
                        session: k.0.clone(),
                        start_ms: f64::from_bits(k.1),
                        split_a: owner[&k],
                        split_b: name,
                    });
                }
                owner.insert(k.clone(), name);
                seen.insert(k);
            }
        }
        Ok(())
    }
}

/// Labeling and augmentation errors.
#[derive(Clone, Debug, PartialEq)]
pub enum LabelError {
    /// Endpoints not finite or duration outside the admissible range.
    InvalidInterval {
        /// Proposed start, ms.
        start_ms: f64,
        /// Proposed end, ms.
        end_ms: f64,
    },
    /// Overlap fraction must lie in (0, 1].
    InvalidOverlapFraction(f64),
    /// Not a known label name.
    UnknownLabel,
    /// Window shorter than the pitch-shift analysis frame.
    WindowTooShort {
        /// Samples provided.
        got: usize,
        /// Samples required.
        minimum: usize,
    },
    /// Augmentation input must consist of original windows.
    AlreadyAugmented,
    /// Channel list and sensor list disagree.
    ChannelCountMismatch {
        /// Channels expected from the sensor list.
        expected: usize,
        /// Channels present.
        got: usize,
    },
    /// Spectrogram shapes differ within one fusion.
    ShapeMismatch {
        /// Shape of the first spectrogram.
        expected: (usize, usize),
        /// Offending shape.
        got: (usize, usize),
    },
    /// Fusion of an empty list.
    EmptyFusion,
    /// Augmented window found outside the training split.
    AugmentedOutsideTrain {
        /// Offending split.
        split: &'static str,
    },
    /// A (session, window start) pair appears in two splits.
    DuplicateWindow {
        /// Session key.
        session: String,
        /// Window start, ms.
        start_ms: f64,
        /// First split holding the window.
        split_a: &'static str,
        /// Second split holding the window.
        split_b: &'static str,
    },
    /// Underlying signal-processing failure.
    Signal(SignalError),
}

impl fmt::Display for LabelError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LabelError::InvalidInterval { start_ms, end_ms } => write!(
                f,
                "breach interval [{start_ms}, {end_ms}] ms must be finite with duration in [{MIN_BREACH_MS}, {MAX_BREACH_MS}] ms"
            ),
            LabelError::InvalidOverlapFraction(v) => {
                write!(f, "overlap fraction {v} must lie in (0, 1]")
            }
            LabelError::UnknownLabel => write!(f, "unknown label name"),
            LabelError::WindowTooShort { got, minimum } => {
                write!(f, "window of {got} samples is shorter than the {minimum}-sample analysis frame")
            }
            LabelError::AlreadyAugmented => {
                write!(f, "augmentation input must consist of original windows")
            }
            LabelError::ChannelCountMismatch { expected, got } => {
                write!(f, "expected {expected} channels, got {got}")
            }
            LabelError::ShapeMismatch { expected, got } => write!(
                f,
                "spectrogram shape {}x{} does not match {}x{}",
                got.0, got.1, expected.0, expected.1
            ),
            LabelError::EmptyFusion => write!(f, "cannot fuse an empty spectrogram list"),
            LabelError::AugmentedOutsideTrain { split } => {
                write!(f, "augmented window found in the {split} split")
            }
            LabelError::DuplicateWindow {
                session,
                start_ms,
                split_a,
                split_b,
            } => write!(
                f,
                "window {session} @ {start_ms} ms appears in both {split_a} and {split_b}"
            ),
            LabelError::Signal(e) => write!(f, "signal error: {e}"),
        }
    }
}

impl core::error::Error for LabelError {
    fn source(&self) -> Option<&(dyn core::error::Error + 'static)> {
        match self {
            LabelError::Signal(e) => Some(e),
            _ => None,
        }
    }
}

impl From<SignalError> for LabelError {
    fn from(e: SignalError) -> Self {
        LabelError::Signal(e)
    }
}
