//! Recordings on disk: one 32-bit float WAV per sensor channel plus a
//! `meta.jsonl` sidecar binding the files to a session.
//!
//! Each sidecar line describes one channel:
//!
//! ```json
//! {"file":"contact_mic.wav","kind":"contact_mic","subject":"S1","level":"L1",
//!  "side":"left","start_epoch_ms":1755002460000,"sample_rate_hz":40000.0}
//! ```
//!
//! Session identity is repeated on every line so a single line is
//! self-describing; load rejects sidecars whose lines disagree.

use crate::FormatError;
use psent_core::signal::{SensorChannel, SensorKind, SessionMeta, SyncRecording};
use serde::{Deserialize, Serialize};
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

/// Sidecar file name inside a session directory.
pub const SIDECAR: &str = "meta.jsonl";

/// One line of the channel sidecar.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ChannelEntry {
    /// WAV file name, relative to the sidecar.
    pub file: String,
    /// Sensor identifier, [`SensorKind::as_str`] form.
    pub kind: String,
    /// Subject identifier.
    pub subject: String,
    /// Vertebral level.
    pub level: String,
    /// Anatomical side.
    pub side: String,
    /// Recording start, ms since the epoch.
    pub start_epoch_ms: i64,
    /// Sample rate, Hz.
    pub sample_rate_hz: f64,
}

/// Write a recording into `dir` as one WAV per channel plus the sidecar.
/// Existing files are overwritten, so a rerun reproduces identical bytes.
pub fn save_recording(dir: &Path, rec: &SyncRecording) -> Result<(), FormatError> {
    fs::create_dir_all(dir).map_err(|e| FormatError::io(dir, e))?;
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: rec.sample_rate_hz.round() as u32,
        bits_per_sample: 32,
        sample_format: hound::SampleFormat::Float,
    };
    let mut entries = Vec::with_capacity(rec.channels().len());
    for ch in rec.channels() {
        let name = format!("{}.wav", ch.kind.as_str());
        let path = dir.join(&name);
        let mut writer = hound::WavWriter::create(&path, spec).map_err(|e| FormatError::Wav {
            path: path.clone(),
            source: e,
        })?;
        for &s in &ch.samples {
            writer.write_sample(s).map_err(|e| FormatError::Wav {
                path: path.clone(),
                source: e,
            })?;
        }
        writer.finalize().map_err(|e| FormatError::Wav {
            path: path.clone(),
            source: e,
        })?;
        entries.push(ChannelEntry {
            file: name,
            kind: ch.kind.as_str().to_string(),
            subject: rec.meta.subject.clone(),
            level: rec.meta.level.clone(),
            side: rec.meta.side.clone(),
            start_epoch_ms: rec.meta.start_epoch_ms,
            sample_rate_hz: rec.sample_rate_hz,
        });
    }
    let sidecar = dir.join(SIDECAR);
    let mut out = Vec::new();
    for e in &entries {
        serde_json::to_writer(&mut out, e).map_err(|e| FormatError::Json {
            path: sidecar.clone(),
            source: e,
        })?;
        out.push(b'\n');
    }
    fs::File::create(&sidecar)
        .and_then(|mut f| f.write_all(&out))
        .map_err(|e| FormatError::io(&sidecar, e))?;
    Ok(())
}

/// Read the sidecar lines without touching the WAVs.
pub fn read_sidecar(dir: &Path) -> Result<Vec<ChannelEntry>, FormatError> {
    let path = dir.join(SIDECAR);
    if !path.exists() {
        return Err(FormatError::Missing {
            role: "channel sidecar",
            path,
        });
    }
    let file = fs::File::open(&path).map_err(|e| FormatError::io(&path, e))?;
    let mut entries = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| FormatError::io(&path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let entry: ChannelEntry =
            serde_json::from_str(&line).map_err(|e| FormatError::Parse {
                path: path.clone(),
                line: i + 1,
                message: e.to_string(),
            })?;
        entries.push(entry);
    }
    if entries.is_empty() {
        return Err(FormatError::invalid(&path, "sidecar lists no channels"));
    }
    for e in &entries[1..] {
        let first = &entries[0];
        if e.subject != first.subject
            || e.level != first.level
            || e.side != first.side
            || e.start_epoch_ms != first.start_epoch_ms
            || e.sample_rate_hz != first.sample_rate_hz
        {
            return Err(FormatError::invalid(
                &path,
                format!("channel {} disagrees on session identity", e.file),
            ));
        }
    }
    Ok(entries)
}

/// Sample count of one channel, from the WAV header alone.
pub fn wav_len_samples(path: &Path) -> Result<usize, FormatError> {
    let reader = hound::WavReader::open(path).map_err(|e| FormatError::Wav {
        path: path.to_path_buf(),
        source: e,
    })?;
    Ok(reader.duration() as usize)
}

fn read_wav(path: &Path) -> Result<(Vec<f32>, f64), FormatError> {
    let mut reader = hound::WavReader::open(path).map_err(|e| FormatError::Wav {
        path: path.to_path_buf(),
        source: e,
    })?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(FormatError::invalid(
            path,
            format!("expected mono, found {} channels", spec.channels),
        ));
    }
    let samples: Result<Vec<f32>, hound::Error> = match spec.sample_format {
        hound::SampleFormat::Float => reader.samples::<f32>().collect(),
        hound::SampleFormat::Int => {
            let scale = 1.0 / (1i64 << (spec.bits_per_sample - 1)) as f32;
            reader
                .samples::<i32>()
                .map(|s| s.map(|v| v as f32 * scale))
                .collect()
        }
    };
    let samples = samples.map_err(|e| FormatError::Wav {
        path: path.to_path_buf(),
        source: e,
    })?;
    Ok((samples, spec.sample_rate as f64))
}

/// Load the channels named by `kinds` (all sidecar channels when `None`),
/// in sidecar order, and reassemble the aligned recording.
pub fn load_recording(
    dir: &Path,
    kinds: Option<&[SensorKind]>,
) -> Result<SyncRecording, FormatError> {
    let entries = read_sidecar(dir)?;
    let sidecar = dir.join(SIDECAR);
    let wanted: Vec<&ChannelEntry> = match kinds {
        None => entries.iter().collect(),
        Some(kinds) => kinds
            .iter()
            .map(|k| {
                entries
                    .iter()
                    .find(|e| e.kind == k.as_str())
                    .ok_or_else(|| {
                        FormatError::invalid(
                            &sidecar,
                            format!("sensor {} not present in this session", k.as_str()),
                        )
                    })
            })
            .collect::<Result<_, _>>()?,
    };

    let mut channels = Vec::with_capacity(wanted.len());
    for e in &wanted {
        let kind = SensorKind::parse(&e.kind)
            .map_err(|_| FormatError::invalid(&sidecar, format!("unknown sensor {}", e.kind)))?;
        let path = dir.join(&e.file);
        let (samples, rate) = read_wav(&path)?;
        if (rate - e.sample_rate_hz).abs() > 1e-9 {
            return Err(FormatError::invalid(
                &path,
                format!(
                    "WAV rate {rate} Hz disagrees with sidecar {} Hz",
                    e.sample_rate_hz
                ),
            ));
        }
        channels.push(SensorChannel { kind, samples });
    }
    let first = wanted[0];
    let meta = SessionMeta {
        subject: first.subject.clone(),
        level: first.level.clone(),
        side: first.side.clone(),
        start_epoch_ms: first.start_epoch_ms,
    };
    SyncRecording::new(meta, first.sample_rate_hz, channels)
        .map_err(|e| FormatError::invalid(dir, e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use psent_core::rng::SeedRng;

    fn sample_recording() -> SyncRecording {
        let mut rng = SeedRng::new(11);
        let meta = SessionMeta {
            subject: "S1".into(),
            level: "L1".into(),
            side: "left".into(),
            start_epoch_ms: 1_755_000_000_000,
        };
        let channels = vec![
            SensorChannel {
                kind: SensorKind::ContactMic,
                samples: (0..4000).map(|_| rng.normal() as f32 * 0.1).collect(),
            },
            SensorChannel {
                kind: SensorKind::AccelBone,
                samples: (0..4000).map(|_| rng.normal() as f32 * 0.05).collect(),
            },
        ];
        SyncRecording::new(meta, 40_000.0, channels).unwrap()
    }

    #[test]
    fn wav_roundtrip_is_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let rec = sample_recording();
        save_recording(dir.path(), &rec).unwrap();
        let back = load_recording(dir.path(), None).unwrap();
        assert_eq!(back.meta.key(), rec.meta.key());
        assert_eq!(back.sample_rate_hz, rec.sample_rate_hz);
        assert_eq!(back.channels().len(), 2);
        for (a, b) in back.channels().iter().zip(rec.channels()) {
            assert_eq!(a.kind, b.kind);
            assert_eq!(a.samples, b.samples);
        }
    }

    #[test]
    fn subset_load_preserves_request_order() {
        let dir = tempfile::tempdir().unwrap();
        save_recording(dir.path(), &sample_recording()).unwrap();
        let back =
            load_recording(dir.path(), Some(&[SensorKind::AccelBone, SensorKind::ContactMic]))
                .unwrap();
        assert_eq!(back.channels()[0].kind, SensorKind::AccelBone);
        assert_eq!(back.channels()[1].kind, SensorKind::ContactMic);
    }

    #[test]
    fn missing_sidecar_is_reported_by_role() {
        let dir = tempfile::tempdir().unwrap();
        let err = load_recording(dir.path(), None).unwrap_err();
        assert!(err.to_string().contains("channel sidecar"));
    }

    #[test]
    fn absent_sensor_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        save_recording(dir.path(), &sample_recording()).unwrap();
        let err = load_recording(dir.path(), Some(&[SensorKind::AccelPin])).unwrap_err();
        assert!(err.to_string().contains("accel_pin"));
    }

    #[test]
    fn header_length_matches_sample_count() {
        let dir = tempfile::tempdir().unwrap();
        let rec = sample_recording();
        save_recording(dir.path(), &rec).unwrap();
        let n = wav_len_samples(&dir.path().join("contact_mic.wav")).unwrap();
        assert_eq!(n, rec.len_samples());
    }
}
