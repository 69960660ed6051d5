//! Sensor taxonomy and time-aligned multi-channel recordings.
//!
//! A drilling session is captured by up to seven synchronized sensors. This
//! module owns the in-memory representation plus the sample-rate plumbing
//! (band-limited resampling, peak normalization). Reading and writing actual
//! files is the companion crate's job.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
#[cfg(not(feature = "std"))]
use num_traits::Float;

/// The seven supported sensor kinds.
///
/// `ContactMic` is structure-borne (clamped to bone), `FreefieldMic` is
/// airborne, `AccelBone` / `AccelPin` are single-axis accelerometers on the
/// exposed bone and guidance pin, and the three `AccelDrill*` kinds are the
/// axes of a tri-axial accelerometer on the drill body.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SensorKind {
    /// Structure-borne contact microphone.
    ContactMic,
    /// Airborne free-field microphone.
    FreefieldMic,
    /// Accelerometer fixed to exposed bone.
    AccelBone,
    /// Accelerometer on the guidance pin.
    AccelPin,
    /// Drill-mounted accelerometer, X axis.
    AccelDrillX,
    /// Drill-mounted accelerometer, Y axis.
    AccelDrillY,
    /// Drill-mounted accelerometer, Z axis.
    AccelDrillZ,
}

impl SensorKind {
    /// All kinds, in canonical order.
    pub const ALL: [SensorKind; 7] = [
        SensorKind::ContactMic,
        SensorKind::FreefieldMic,
        SensorKind::AccelBone,
        SensorKind::AccelPin,
        SensorKind::AccelDrillX,
        SensorKind::AccelDrillY,
        SensorKind::AccelDrillZ,
    ];

    /// Stable identifier used in sidecar metadata and file names.
    pub fn as_str(self) -> &'static str {
        match self {
            SensorKind::ContactMic => "contact_mic",
            SensorKind::FreefieldMic => "freefield_mic",
            SensorKind::AccelBone => "accel_bone",
            SensorKind::AccelPin => "accel_pin",
            SensorKind::AccelDrillX => "accel_drill_x",
            SensorKind::AccelDrillY => "accel_drill_y",
            SensorKind::AccelDrillZ => "accel_drill_z",
        }
    }

    /// Parse a stable identifier; rejects anything outside the taxonomy.
    pub fn parse(s: &str) -> Result<Self, SignalError> {
        Self::ALL
            .iter()
            .copied()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| SignalError::UnknownSensorKind(String::from(s)))
    }
}

impl fmt::Display for SensorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Session identity shared by all channels of a recording.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct SessionMeta {
    /// Subject identifier, e.g. "S1".
    pub subject: String,
    /// Vertebral level, e.g. "L3".
    pub level: String,
    /// Anatomical side, "left" or "right".
    pub side: String,
    /// Recording start, milliseconds since the epoch; channels of one
    /// session share this value exactly.
    pub start_epoch_ms: i64,
}

impl SessionMeta {
    /// Stable session identifier: subject, level, and side joined by `-`
    /// (one pedicle drilling = one session).
    pub fn key(&self) -> String {
        let mut k = String::with_capacity(self.subject.len() + self.level.len() + self.side.len() + 2);
        k.push_str(&self.subject);
        k.push('-');
        k.push_str(&self.level);
        k.push('-');
        k.push_str(&self.side);
        k
    }
}

/// One sensor's samples.
#[derive(Clone, Debug)]
pub struct SensorChannel {
    /// Which sensor produced the samples.
    pub kind: SensorKind,
    /// Samples, normalized or raw depending on provenance.
    pub samples: Vec<f32>,
}

/// Time-aligned multi-channel recording at a single sample rate.
#[derive(Clone, Debug)]
pub struct SyncRecording {
    /// Session identity.
    pub meta: SessionMeta,
    /// Common sample rate, Hz.
    pub sample_rate_hz: f64,
    channels: Vec<SensorChannel>,
}

impl SyncRecording {
    /// Build a recording, enforcing alignment: at least one channel, all
    /// channels the same length, a positive finite sample rate.
    pub fn new(
        meta: SessionMeta,
        sample_rate_hz: f64,
        channels: Vec<SensorChannel>,
    ) -> Result<Self, SignalError> {
        if !(sample_rate_hz.is_finite() && sample_rate_hz > 0.0) {
            return Err(SignalError::InvalidSampleRate(sample_rate_hz));
        }
        let first = channels.first().ok_or(SignalError::EmptyRecording)?;
        let len = first.samples.len();
        for ch in &channels {
            if ch.samples.len() != len {
                return Err(SignalError::MismatchedLength {
                    kind: ch.kind,
                    expected: len,
                    got: ch.samples.len(),
                });
            }
        }
        Ok(Self {
            meta,
            sample_rate_hz,
            channels,
        })
    }

    /// Channels in their stored order.
    pub fn channels(&self) -> &[SensorChannel] {
        &self.channels
    }

    /// Channel for `kind`, if present.
    pub fn channel(&self, kind: SensorKind) -> Option<&SensorChannel> {
        self.channels.iter().find(|c| c.kind == kind)
    }

    /// Samples per channel.
    pub fn len_samples(&self) -> usize {
        self.channels[0].samples.len()
    }

    /// Common duration in milliseconds.
    pub fn duration_ms(&self) -> f64 {
        self.len_samples() as f64 / self.sample_rate_hz * 1000.0
    }

    /// Peak-normalize every channel in place (divide by max abs; all-zero
    /// channels are left untouched).
    pub fn normalize_peaks(&mut self) {
        for ch in &mut self.channels {
            normalize_peak(&mut ch.samples);
        }
    }
}

/// Divide samples by their max absolute value and return that peak. An
/// all-zero (or empty) slice is left unchanged and reports a peak of 0. The
/// argmax over absolute values is unaffected.
pub fn normalize_peak(samples: &mut [f32]) -> f32 {
    let peak = samples.iter().fold(0.0f32, |m, &x| m.max(x.abs()));
    if peak > 0.0 {
        for x in samples.iter_mut() {
            *x /= peak;
        }
    }
    peak
}

/// Band-limited arbitrary-ratio resampling via a Blackman-windowed sinc
/// kernel, normalized per output sample so a constant signal is preserved
/// exactly. Equal input and output rates return a bit-exact copy. The output
/// length is `round(n * to/from)`, keeping duration within one output sample.
pub fn resample(samples: &[f32], from_hz: f64, to_hz: f64) -> Result<Vec<f32>, SignalError> {
    if from_hz == to_hz || samples.is_empty() {
        check_rate(from_hz)?;
        check_rate(to_hz)?;
        return Ok(samples.to_vec());
    }
    let wide: Vec<f64> = samples.iter().map(|&x| x as f64).collect();
    let out = resample_f64(&wide, from_hz, to_hz)?;
    Ok(out.into_iter().map(|x| x as f32).collect())
}

/// [`resample`] over f64 samples, for callers mid-pipeline in double
/// precision.
pub fn resample_f64(samples: &[f64], from_hz: f64, to_hz: f64) -> Result<Vec<f64>, SignalError> {
    check_rate(from_hz)?;
    check_rate(to_hz)?;
    if from_hz == to_hz || samples.is_empty() {
        return Ok(samples.to_vec());
    }

    let ratio = to_hz / from_hz;
    let out_len = ((samples.len() as f64) * ratio).round().max(1.0) as usize;
    // Cutoff at the lower of the two Nyquist frequencies, in units of the
    // input rate; when downsampling the kernel widens by 1/cutoff.
    let cutoff = ratio.min(1.0);
    const ZERO_CROSSINGS: f64 = 24.0;
    let radius = ZERO_CROSSINGS / cutoff;

    let mut out = Vec::with_capacity(out_len);
    let n = samples.len() as isize;
    for m in 0..out_len {
        let center = m as f64 / ratio;
        let lo = ((center - radius).ceil() as isize).max(0);
        let hi = ((center + radius).floor() as isize).min(n - 1);
        let mut acc = 0.0f64;
        let mut ksum = 0.0f64;
        for j in lo..=hi {
            let t = center - j as f64;
            let k = windowed_sinc(t, cutoff, radius);
            acc += samples[j as usize] * k;
            ksum += k;
        }
        out.push(if ksum != 0.0 { acc / ksum } else { 0.0 });
    }
    Ok(out)
}

fn check_rate(hz: f64) -> Result<(), SignalError> {
    if hz.is_finite() && hz > 0.0 {
        Ok(())
    } else {
        Err(SignalError::InvalidSampleRate(hz))
    }
}

fn windowed_sinc(t: f64, cutoff: f64, radius: f64) -> f64 {
    let x = t / radius;
    if x.abs() >= 1.0 {
        return 0.0;
    }
    // Blackman window over [-radius, radius].
    let a = core::f64::consts::PI * (x + 1.0);
    let w = 0.42 - 0.5 * a.cos() + 0.08 * (2.0 * a).cos();
    w * cutoff * sinc(cutoff * t)
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        let px = core::f64::consts::PI * x;
        px.sin() / px
    }
}

/// Errors from recording construction and sample-rate operations.
#[derive(Clone, Debug, PartialEq)]
pub enum SignalError {
    /// A recording needs at least one channel.
    EmptyRecording,
    /// Channel length disagrees with the first channel.
    MismatchedLength {
        /// Offending channel.
        kind: SensorKind,
        /// Length of the first channel.
        expected: usize,
        /// Length found.
        got: usize,
    },
    /// Channels carry different sample rates and no resample target was given.
    MismatchedRate {
        /// Rate of the first channel, Hz.
        expected: f64,
        /// Rate found, Hz.
        got: f64,
    },
    /// Sample rate is not a positive finite number.
    InvalidSampleRate(f64),
    /// Sensor name outside the taxonomy.
    UnknownSensorKind(String),
}

impl fmt::Display for SignalError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SignalError::EmptyRecording => write!(f, "recording has no channels"),
            SignalError::MismatchedLength {
                kind,
                expected,
                got,
            } => write!(
                f,
                "channel {kind} has {got} samples, expected {expected} (channels must be aligned)"
            ),
            SignalError::MismatchedRate { expected, got } => write!(
                f,
                "channel sample rate {got} Hz differs from {expected} Hz and no resample target was set"
            ),
            SignalError::InvalidSampleRate(r) => write!(f, "invalid sample rate {r} Hz"),
            SignalError::UnknownSensorKind(s) => {
                write!(f, "unknown sensor kind {s:?}; expected one of: ")?;
                for (i, k) in SensorKind::ALL.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{k}")?;
                }
                Ok(())
            }
        }
    }
}

impl core::error::Error for SignalError {}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn sensor_kind_roundtrip_and_unknown() {
        for kind in SensorKind::ALL {
            assert_eq!(SensorKind::parse(kind.as_str()).unwrap(), kind);
        }
        let err = SensorKind::parse("laser_mic").unwrap_err();
        assert!(matches!(err, SignalError::UnknownSensorKind(_)));
        let msg = alloc::format!("{err}");
        assert!(msg.contains("contact_mic") && msg.contains("accel_drill_z"));
    }

    #[test]
    fn recording_rejects_misaligned_channels() {
        let meta = SessionMeta::default();
        let err = SyncRecording::new(
            meta,
            40_000.0,
            vec![
                SensorChannel {
                    kind: SensorKind::ContactMic,
                    samples: vec![0.0; 100],
                },
                SensorChannel {
                    kind: SensorKind::AccelBone,
                    samples: vec![0.0; 99],
                },
            ],
        )
        .unwrap_err();
        assert!(matches!(err, SignalError::MismatchedLength { .. }));
    }

    #[test]
    fn recording_rejects_empty() {
        let err = SyncRecording::new(SessionMeta::default(), 40_000.0, vec![]).unwrap_err();
        assert_eq!(err, SignalError::EmptyRecording);
    }

    #[test]
    fn normalize_peak_keeps_argmax_and_handles_silence() {
        let mut v = vec![0.1f32, -0.5, 0.3, 0.2];
        let argmax_before = 1;
        let peak = normalize_peak(&mut v);
        assert_eq!(peak, 0.5);
        assert_eq!(v[1], -1.0);
        let argmax_after = v
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.abs().partial_cmp(&b.1.abs()).unwrap())
            .unwrap()
            .0;
        assert_eq!(argmax_before, argmax_after);

        let mut z = vec![0.0f32; 8];
        assert_eq!(normalize_peak(&mut z), 0.0);
        assert!(z.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn resample_identity_is_bit_exact() {
        let v: Vec<f32> = (0..1000).map(|i| (i as f32 * 0.01).sin()).collect();
        let out = resample(&v, 40_000.0, 40_000.0).unwrap();
        assert_eq!(out, v);
    }

    #[test]
    fn resample_preserves_dc() {
        let v = vec![0.5f32; 4800];
        let out = resample(&v, 48_000.0, 40_000.0).unwrap();
        assert_eq!(out.len(), 4000);
        for &x in &out {
            assert!((x - 0.5).abs() < 1e-6, "{x}");
        }
    }

    #[test]
    fn resample_duration_within_one_sample() {
        let v = vec![0.0f32; 48_000 * 5];
        let out = resample(&v, 48_000.0, 40_000.0).unwrap();
        assert_eq!(out.len(), 40_000 * 5);
        let odd = vec![0.0f32; 48_011];
        let out = resample(&odd, 48_000.0, 40_000.0).unwrap();
        let expect = (48_011.0f64 * 40.0 / 48.0).round();
        assert!((out.len() as f64 - expect).abs() <= 1.0);
    }

    #[test]
    fn resample_rejects_bad_rates() {
        assert!(resample(&[0.0], 0.0, 40_000.0).is_err());
        assert!(resample(&[0.0], 40_000.0, f64::NAN).is_err());
    }
}
