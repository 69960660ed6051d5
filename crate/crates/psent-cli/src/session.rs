//! Session directory layout.
//!
//! A dataset root produced by `psent simulate` looks like:
//!
//! ```text
//! root/
//!   manifest.json
//!   sessions/<subject>-<level>-<side>/
//!     contact_mic.wav ... accel_drill_z.wav
//!     meta.jsonl          channel sidecar
//!     trajectory.csv      camera-frame tracked tip positions
//!     ct_to_cam.json      CT-to-camera rigid transform
//!     mesh.ply            vertebra surface mesh, CT frame
//!     plan.json           planned entry/exit points, CT frame
//!     truth.json          simulator ground truth (evaluation only)
//!   volumes/<subject>.huv synthetic CT density volumes
//!   labels/               written by `psent label`
//!   features/<tag>/       written by `psent featurize`
//! ```
//!
//! `plan.json` carries what a preoperative plan would provide; the labeling
//! pipeline reads only the plan, never `truth.json`.

use crate::FormatError;
use psent_core::geometry::linalg::Vec3;
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::{Path, PathBuf};

/// Subdirectory holding one directory per session.
pub const SESSIONS_DIR: &str = "sessions";
/// Subdirectory holding per-subject HU volumes.
pub const VOLUMES_DIR: &str = "volumes";
/// Subdirectory holding label manifests.
pub const LABELS_DIR: &str = "labels";
/// Subdirectory holding featurized windows, one child per sensor tag.
pub const FEATURES_DIR: &str = "features";
/// Top-level manifest file name.
pub const MANIFEST: &str = "manifest.json";

/// File names inside one session directory.
pub mod files {
    /// Tracked trajectory CSV.
    pub const TRAJECTORY: &str = "trajectory.csv";
    /// CT-to-camera transform JSON.
    pub const CT_TO_CAM: &str = "ct_to_cam.json";
    /// Vertebra mesh PLY.
    pub const MESH: &str = "mesh.ply";
    /// Planned entry/exit JSON.
    pub const PLAN: &str = "plan.json";
    /// Simulator ground truth JSON.
    pub const TRUTH: &str = "truth.json";
}

/// Planned screw path, CT frame.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PlanFile {
    /// Planned entry point, mm.
    pub entry_ct_mm: Vec3,
    /// Planned exit point, mm.
    pub exit_ct_mm: Vec3,
}

/// Simulator ground truth. Written for evaluation; the labeling pipeline
/// must never read it.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TruthFile {
    /// Time the tip reaches the entry wall, ms.
    pub entry_time_ms: f64,
    /// Analytic cortical crossing time, ms.
    pub breach_time_ms: f64,
    /// End of the breach burst, ms.
    pub burst_end_ms: f64,
    /// Labeling interval start, ms.
    pub interval_start_ms: f64,
    /// Labeling interval end, ms.
    pub interval_end_ms: f64,
}

/// Write a small JSON file with a trailing newline.
pub fn save_json<T: Serialize>(path: &Path, value: &T) -> Result<(), FormatError> {
    let json = serde_json::to_string_pretty(value).map_err(|e| FormatError::Json {
        path: path.to_path_buf(),
        source: e,
    })?;
    fs::write(path, json + "\n").map_err(|e| FormatError::io(path, e))
}

/// Read a JSON file, reporting its role when the file is absent.
pub fn load_json<T: for<'de> Deserialize<'de>>(
    path: &Path,
    role: &'static str,
) -> Result<T, FormatError> {
    if !path.exists() {
        return Err(FormatError::Missing {
            role,
            path: path.to_path_buf(),
        });
    }
    let text = fs::read_to_string(path).map_err(|e| FormatError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| FormatError::Json {
        path: path.to_path_buf(),
        source: e,
    })
}

/// Session directories under `root/sessions`, sorted by key.
pub fn list_sessions(root: &Path) -> Result<Vec<(String, PathBuf)>, FormatError> {
    let dir = root.join(SESSIONS_DIR);
    if !dir.exists() {
        return Err(FormatError::Missing {
            role: "sessions directory",
            path: dir,
        });
    }
    let mut out = Vec::new();
    for entry in fs::read_dir(&dir).map_err(|e| FormatError::io(&dir, e))? {
        let entry = entry.map_err(|e| FormatError::io(&dir, e))?;
        let path = entry.path();
        if path.is_dir() {
            let key = entry.file_name().to_string_lossy().into_owned();
            out.push((key, path));
        }
    }
    out.sort();
    Ok(out)
}

/// Merge `record` into the top-level manifest under `command`, creating the
/// manifest when absent. Rewrites are deterministic: keys are sorted and
/// no timestamps are recorded, so reruns leave identical bytes.
pub fn update_manifest(
    root: &Path,
    command: &str,
    record: serde_json::Value,
) -> Result<(), FormatError> {
    let path = root.join(MANIFEST);
    let mut doc: serde_json::Map<String, serde_json::Value> = if path.exists() {
        let text = fs::read_to_string(&path).map_err(|e| FormatError::io(&path, e))?;
        serde_json::from_str(&text).map_err(|e| FormatError::Json {
            path: path.clone(),
            source: e,
        })?
    } else {
        serde_json::Map::new()
    };
    doc.insert(command.to_string(), record);
    let json =
        serde_json::to_string_pretty(&serde_json::Value::Object(doc)).map_err(|e| {
            FormatError::Json {
                path: path.clone(),
                source: e,
            }
        })?;
    fs::write(&path, json + "\n").map_err(|e| FormatError::io(&path, e))
}

/// Like [`update_manifest`], but merges `record` under
/// `manifest[command][subkey]`, preserving sibling subkeys (used by
/// commands that run once per sensor tag).
pub fn update_manifest_nested(
    root: &Path,
    command: &str,
    subkey: &str,
    record: serde_json::Value,
) -> Result<(), FormatError> {
    let path = root.join(MANIFEST);
    let mut doc: serde_json::Map<String, serde_json::Value> = if path.exists() {
        let text = fs::read_to_string(&path).map_err(|e| FormatError::io(&path, e))?;
        serde_json::from_str(&text).map_err(|e| FormatError::Json {
            path: path.clone(),
            source: e,
        })?
    } else {
        serde_json::Map::new()
    };
    let slot = doc
        .entry(command.to_string())
        .or_insert_with(|| serde_json::Value::Object(serde_json::Map::new()));
    if !slot.is_object() {
        *slot = serde_json::Value::Object(serde_json::Map::new());
    }
    slot.as_object_mut()
        .expect("slot was just made an object")
        .insert(subkey.to_string(), record);
    let json =
        serde_json::to_string_pretty(&serde_json::Value::Object(doc)).map_err(|e| {
            FormatError::Json {
                path: path.clone(),
                source: e,
            }
        })?;
    fs::write(&path, json + "\n").map_err(|e| FormatError::io(&path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_merge_keeps_other_commands() {
        let dir = tempfile::tempdir().unwrap();
        update_manifest(dir.path(), "simulate", serde_json::json!({"sessions": 2})).unwrap();
        update_manifest(dir.path(), "label", serde_json::json!({"sessions": 2})).unwrap();
        let doc: serde_json::Value =
            load_json(&dir.path().join(MANIFEST), "manifest").unwrap();
        assert_eq!(doc["simulate"]["sessions"], 2);
        assert_eq!(doc["label"]["sessions"], 2);
    }

    #[test]
    fn manifest_rewrite_is_idempotent() {
        let dir = tempfile::tempdir().unwrap();
        let rec = serde_json::json!({"seed": 41000, "sessions": ["S1-L1-left"]});
        update_manifest(dir.path(), "simulate", rec.clone()).unwrap();
        let first = fs::read(dir.path().join(MANIFEST)).unwrap();
        update_manifest(dir.path(), "simulate", rec).unwrap();
        let second = fs::read(dir.path().join(MANIFEST)).unwrap();
        assert_eq!(first, second);
    }

    #[test]
    fn plan_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("plan.json");
        let plan = PlanFile {
            entry_ct_mm: [20.0, 20.0, 0.0],
            exit_ct_mm: [20.0, 20.0, 18.0],
        };
        save_json(&path, &plan).unwrap();
        let back: PlanFile = load_json(&path, "screw plan").unwrap();
        assert_eq!(back.entry_ct_mm, plan.entry_ct_mm);
        assert_eq!(back.exit_ct_mm, plan.exit_ct_mm);
    }
}
