//! `psent label`: derive per-window labels from tracking geometry.
//!
//! For each session the command reads the planned entry/exit points, the
//! tracked trajectory, the CT-to-camera transform, the vertebra mesh, and
//! the recording length, locates the cortical crossing as the
//! minimum-distance trajectory sample, and labels every analysis window by
//! interval overlap. The simulator's `truth.json` is never read; labels
//! come from the same geometry a real navigation system would provide.
//!
//! Outputs under `root/labels/`:
//! - `<session>.jsonl`: one line per window with `index`, `start_ms`,
//!   `label`.
//! - `<session>.breach.json`: located crossing sample, time, distance, and
//!   the labeling interval.
//! - `<session>.distance.csv`: tip-to-entry/exit/mesh distance curves.

use crate::config::RunConfig;
use crate::session::{self, files, PlanFile};
use crate::{traj_io, wav, FormatError};
use anyhow::Context;
use psent_core::dsp::slice_windows;
use psent_core::geometry::{
    distance_curves, find_breach, find_entry_exit, FrameId, TrackedTrajectory,
};
use psent_core::label::{label_windows, BreachInterval};
use serde::{Deserialize, Serialize};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

/// Parsed `label` arguments.
pub struct LabelArgs {
    /// Dataset root (from `psent simulate` or equivalent layout).
    pub data: PathBuf,
    /// Restrict to these session keys; empty means all.
    pub sessions: Vec<String>,
}

/// One line of a label manifest.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LabelEntry {
    /// Window index.
    pub index: usize,
    /// Window start on the recording clock, ms.
    pub start_ms: f64,
    /// `breach` or `non_breach`.
    pub label: String,
}

/// Located crossing written beside the label manifest.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BreachFile {
    /// Trajectory sample index of the crossing.
    pub index: usize,
    /// Crossing time, ms.
    pub time_ms: f64,
    /// Tip-to-mesh distance at the crossing, mm.
    pub distance_mm: f64,
    /// Labeling interval start, ms.
    pub interval_start_ms: f64,
    /// Labeling interval end, ms.
    pub interval_end_ms: f64,
}

fn session_audio_len(dir: &Path) -> Result<(usize, f64), FormatError> {
    let entries = wav::read_sidecar(dir)?;
    let first = &entries[0];
    let n = wav::wav_len_samples(&dir.join(&first.file))?;
    Ok((n, first.sample_rate_hz))
}

/// Label one session directory; returns the label entries and the located
/// breach record.
pub fn label_session(
    dir: &Path,
    cfg: &RunConfig,
) -> anyhow::Result<(Vec<LabelEntry>, BreachFile, psent_core::geometry::DistanceCurves)> {
    let plan: PlanFile = session::load_json(&dir.join(files::PLAN), "screw plan")?;
    let traj: TrackedTrajectory =
        traj_io::load_trajectory(&dir.join(files::TRAJECTORY), FrameId::Camera)?;
    let ct_to_cam = traj_io::load_transform(&dir.join(files::CT_TO_CAM))?;
    let mesh = mesh_or_missing(dir)?;
    let (n_samples, sample_rate_hz) = session_audio_len(dir)?;

    let path = find_entry_exit(&traj, plan.entry_ct_mm, plan.exit_ct_mm, &ct_to_cam)?;
    let breach = find_breach(&traj, &mesh, &ct_to_cam, &path, cfg.distance_mode()?)?;
    let curves = distance_curves(
        &traj,
        &mesh,
        plan.entry_ct_mm,
        plan.exit_ct_mm,
        &ct_to_cam,
    )?;

    let interval = BreachInterval::new(breach.time_ms, breach.time_ms + cfg.label.span_ms)?;
    let windows = slice_windows(n_samples, sample_rate_hz, &cfg.window_spec())?;
    let labels = label_windows(&windows, sample_rate_hz, Some(&interval), cfg.label.overlap)?;

    let entries = windows
        .iter()
        .zip(&labels)
        .map(|(w, l)| LabelEntry {
            index: w.index,
            start_ms: w.start_ms(sample_rate_hz),
            label: l.as_str().to_string(),
        })
        .collect();
    let breach_file = BreachFile {
        index: breach.index,
        time_ms: breach.time_ms,
        distance_mm: breach.distance_mm,
        interval_start_ms: interval.start_ms(),
        interval_end_ms: interval.end_ms(),
    };
    Ok((entries, breach_file, curves))
}

fn mesh_or_missing(dir: &Path) -> Result<psent_core::geometry::TriMesh, FormatError> {
    crate::mesh_io::load_ply(&dir.join(files::MESH))
}

/// Read a label manifest back.
pub fn read_labels(path: &Path) -> Result<Vec<LabelEntry>, FormatError> {
    if !path.exists() {
        return Err(FormatError::Missing {
            role: "label manifest",
            path: path.to_path_buf(),
        });
    }
    let text = fs::read_to_string(path).map_err(|e| FormatError::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let entry: LabelEntry = serde_json::from_str(line).map_err(|e| FormatError::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(entry);
    }
    Ok(out)
}

/// Run the command.
pub fn run(args: &LabelArgs, cfg: &RunConfig) -> anyhow::Result<()> {
    let all = session::list_sessions(&args.data)?;
    let selected: Vec<(String, PathBuf)> = if args.sessions.is_empty() {
        all
    } else {
        args.sessions
            .iter()
            .map(|want| {
                all.iter()
                    .find(|(key, _)| key == want)
                    .cloned()
                    .ok_or_else(|| anyhow::anyhow!("session {want} not found under {}", args.data.display()))
            })
            .collect::<anyhow::Result<_>>()?
    };

    let labels_dir = args.data.join(session::LABELS_DIR);
    fs::create_dir_all(&labels_dir)
        .with_context(|| format!("creating {}", labels_dir.display()))?;

    let mut labeled = Vec::new();
    for (key, dir) in &selected {
        let (entries, breach, curves) =
            label_session(dir, cfg).with_context(|| format!("session {key}"))?;

        let manifest = labels_dir.join(format!("{key}.jsonl"));
        let mut out = Vec::new();
        for e in &entries {
            serde_json::to_writer(&mut out, e)?;
            out.push(b'\n');
        }
        fs::File::create(&manifest)
            .and_then(|mut f| f.write_all(&out))
            .map_err(|e| FormatError::io(&manifest, e))?;

        session::save_json(&labels_dir.join(format!("{key}.breach.json")), &breach)?;

        let csv_path = labels_dir.join(format!("{key}.distance.csv"));
        let mut csv = String::from("t_ms,to_entry_mm,to_exit_mm,to_mesh_mm\n");
        for i in 0..curves.time_ms.len() {
            csv.push_str(&format!(
                "{},{},{},{}\n",
                curves.time_ms[i], curves.to_entry_mm[i], curves.to_exit_mm[i], curves.to_mesh_mm[i]
            ));
        }
        fs::write(&csv_path, csv).map_err(|e| FormatError::io(&csv_path, e))?;
        labeled.push(key.clone());
    }

    session::update_manifest(
        &args.data,
        "label",
        serde_json::json!({
            "sessions": labeled,
            "window_ms": cfg.dataset.window_ms,
            "step_ms": cfg.dataset.step_ms,
            "span_ms": cfg.label.span_ms,
            "overlap": cfg.label.overlap,
            "distance_mode": cfg.label.distance_mode,
        }),
    )?;
    log::info!("labeled {} sessions", labeled.len());
    Ok(())
}
