//! Assembling training tensors from featurized windows on disk.
//!
//! `psent featurize` writes one directory per session under
//! `features/<tag>/`, holding `w*.mspc` tensors plus an `index.jsonl`
//! manifest line per window:
//!
//! ```json
//! {"file":"w00012.mspc","subject":"S1","level":"L1","side":"left",
//!  "start_epoch_ms":1755002460000,"start_ms":300.0,"label":"breach",
//!  "sensors":["contact_mic"],"augmentation":"none"}
//! ```
//!
//! This module reads those manifests back into [`LabeledWindow`]s and packs
//! them into [`Dataset`]s. Class indices are fixed: non-breach is 0,
//! breach is 1.

use crate::tensor_io;
use crate::FormatError;
use psent_core::label::{Augmentation, LabeledWindow, WindowLabel, WindowMeta};
use psent_core::nn::{Dataset, Tensor4};
use psent_core::signal::{SensorKind, SessionMeta};
use serde::{Deserialize, Serialize};
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::Path;

/// Class index of a label (non-breach 0, breach 1).
pub fn class_index(label: WindowLabel) -> usize {
    usize::from(label.is_breach())
}

/// One line of a session's feature index.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IndexEntry {
    /// Tensor file name, relative to the index.
    pub file: String,
    /// Subject identifier.
    pub subject: String,
    /// Vertebral level.
    pub level: String,
    /// Anatomical side.
    pub side: String,
    /// Recording start, ms since the epoch.
    pub start_epoch_ms: i64,
    /// Window start on the recording clock, ms.
    pub start_ms: f64,
    /// `breach` or `non_breach`.
    pub label: String,
    /// Fused sensors, channel order.
    pub sensors: Vec<String>,
    /// `none`, `gain:<db>`, or `pitch:<semitones>`.
    pub augmentation: String,
}

/// Encode an augmentation for the index.
pub fn augmentation_tag(a: &Augmentation) -> String {
    match a {
        Augmentation::None => "none".to_string(),
        Augmentation::GainDb(db) => format!("gain:{db}"),
        Augmentation::PitchSemitones(s) => format!("pitch:{s}"),
    }
}

/// Decode an augmentation tag.
pub fn parse_augmentation(tag: &str) -> Option<Augmentation> {
    if tag == "none" {
        return Some(Augmentation::None);
    }
    if let Some(db) = tag.strip_prefix("gain:") {
        return db.parse().ok().map(Augmentation::GainDb);
    }
    if let Some(s) = tag.strip_prefix("pitch:") {
        return s.parse().ok().map(Augmentation::PitchSemitones);
    }
    None
}

/// Read one session's feature index.
pub fn read_index(session_dir: &Path) -> Result<Vec<IndexEntry>, FormatError> {
    let path = session_dir.join("index.jsonl");
    if !path.exists() {
        return Err(FormatError::Missing {
            role: "feature index",
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
        let entry: IndexEntry = serde_json::from_str(&line).map_err(|e| FormatError::Parse {
            path: path.clone(),
            line: i + 1,
            message: e.to_string(),
        })?;
        entries.push(entry);
    }
    Ok(entries)
}

/// Load one session's windows from `features/<tag>/<session>`, skipping
/// augmented variants unless asked for them.
pub fn load_session_windows(
    session_dir: &Path,
    include_augmented: bool,
) -> Result<Vec<LabeledWindow>, FormatError> {
    let index_path = session_dir.join("index.jsonl");
    let entries = read_index(session_dir)?;
    let mut out = Vec::with_capacity(entries.len());
    for e in entries {
        let augmentation = parse_augmentation(&e.augmentation).ok_or_else(|| {
            FormatError::invalid(&index_path, format!("bad augmentation tag {}", e.augmentation))
        })?;
        if augmentation.is_augmented() && !include_augmented {
            continue;
        }
        let label = WindowLabel::parse(&e.label)
            .map_err(|_| FormatError::invalid(&index_path, format!("bad label {}", e.label)))?;
        let sensors: Vec<SensorKind> = e
            .sensors
            .iter()
            .map(|s| {
                SensorKind::parse(s).map_err(|_| {
                    FormatError::invalid(&index_path, format!("unknown sensor {s}"))
                })
            })
            .collect::<Result<_, _>>()?;
        let spectra = tensor_io::load_stack(&session_dir.join(&e.file))?;
        out.push(LabeledWindow {
            spectra,
            label,
            meta: WindowMeta {
                session: SessionMeta {
                    subject: e.subject,
                    level: e.level,
                    side: e.side,
                    start_epoch_ms: e.start_epoch_ms,
                },
                start_ms: e.start_ms,
                sensors,
                augmentation,
            },
        });
    }
    Ok(out)
}

/// Load the windows of several sessions from a feature tag directory.
pub fn load_sessions(
    tag_dir: &Path,
    sessions: &[String],
    include_augmented: bool,
) -> Result<Vec<LabeledWindow>, FormatError> {
    let mut out = Vec::new();
    for key in sessions {
        let dir = tag_dir.join(key);
        if !dir.exists() {
            return Err(FormatError::Missing {
                role: "featurized session",
                path: dir,
            });
        }
        out.extend(load_session_windows(&dir, include_augmented)?);
    }
    Ok(out)
}

/// Pack windows into a training dataset. All windows must share one tensor
/// shape; `context` names the split in error messages.
pub fn to_dataset(
    windows: &[LabeledWindow],
    context: &str,
) -> Result<Dataset<f32>, FormatError> {
    let first = windows.first().ok_or_else(|| {
        FormatError::invalid(context, "no windows to assemble".to_string())
    })?;
    let (c, h, w) = (
        first.spectra.channels(),
        first.spectra.n_mels(),
        first.spectra.n_frames(),
    );
    let mut values = Vec::with_capacity(windows.len() * c * h * w);
    let mut labels = Vec::with_capacity(windows.len());
    for win in windows {
        if (win.spectra.channels(), win.spectra.n_mels(), win.spectra.n_frames()) != (c, h, w) {
            return Err(FormatError::invalid(
                context,
                format!(
                    "window {}@{} has shape {}x{}x{}, expected {}x{}x{}",
                    win.meta.session.key(),
                    win.meta.start_ms,
                    win.spectra.channels(),
                    win.spectra.n_mels(),
                    win.spectra.n_frames(),
                    c,
                    h,
                    w
                ),
            ));
        }
        values.extend_from_slice(win.spectra.values());
        labels.push(class_index(win.label));
    }
    let inputs = Tensor4::new(windows.len(), c, h, w, values)
        .map_err(|e| FormatError::invalid(context, e.to_string()))?;
    Dataset::new(inputs, labels).map_err(|e| FormatError::invalid(context, e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn augmentation_tags_roundtrip() {
        for a in [
            Augmentation::None,
            Augmentation::GainDb(-5.0),
            Augmentation::GainDb(3.0),
            Augmentation::PitchSemitones(-2),
            Augmentation::PitchSemitones(1),
        ] {
            let tag = augmentation_tag(&a);
            assert_eq!(parse_augmentation(&tag), Some(a));
        }
        assert_eq!(parse_augmentation("reverb:0.3"), None);
    }

    #[test]
    fn class_indices_are_stable() {
        assert_eq!(class_index(WindowLabel::NonBreach), 0);
        assert_eq!(class_index(WindowLabel::Breach), 1);
    }

    #[test]
    fn missing_index_is_reported_by_role() {
        let dir = tempfile::tempdir().unwrap();
        let err = load_session_windows(dir.path(), true).unwrap_err();
        assert!(err.to_string().contains("feature index"));
    }
}
