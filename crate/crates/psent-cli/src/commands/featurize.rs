//! `psent featurize`: turn labeled recordings into fused spectrogram
//! tensors ready for training.
//!
//! For every session the command loads the requested sensor channels,
//! slices analysis windows, joins them with the label manifest, and writes
//! one `.mspc` tensor per kept window under `features/<tag>/<session>/`
//! plus an `index.jsonl` manifest.
//!
//! Window retention follows the evaluation protocol: sessions in the
//! held-out test set (derived from the cross-validation plan, so every
//! command agrees on it) keep all windows untouched, while training
//! sessions keep every breach window plus a seeded sample of
//! `non_breach_ratio` non-breach windows per breach window, optionally
//! expanding breach windows nine-fold by gain and pitch augmentation.

use crate::commands::sensor_tag;
use crate::config::RunConfig;
use crate::dataset::{augmentation_tag, IndexEntry};
use crate::session;
use crate::tensor_io;
use crate::{wav, FormatError};
use anyhow::Context;
use psent_core::dsp::{mel_filterbank, mel_spectrogram_with, slice_windows};
use psent_core::eval::split_cv;
use psent_core::label::{augment_breach_class, fuse, RawWindow, WindowLabel};
use psent_core::rng::SeedRng;
use psent_core::signal::{SensorKind, SyncRecording};
use std::fs;
use std::io::Write;
use std::path::PathBuf;

/// Parsed `featurize` arguments.
pub struct FeaturizeArgs {
    /// Dataset root.
    pub data: PathBuf,
    /// Sensors to fuse, channel order.
    pub sensors: Vec<SensorKind>,
    /// Keep every window of every session (skip subsampling).
    pub all_windows: bool,
}

/// Join one session's windows with its label manifest and cut raw windows.
fn cut_windows(
    rec: &SyncRecording,
    labels: &[crate::commands::label::LabelEntry],
    cfg: &RunConfig,
) -> anyhow::Result<Vec<RawWindow>> {
    let rate = rec.sample_rate_hz;
    let windows = slice_windows(rec.len_samples(), rate, &cfg.window_spec())?;
    if windows.len() != labels.len() {
        anyhow::bail!(
            "label manifest covers {} windows but the recording slices into {}; \
             re-run `psent label` with the current window settings",
            labels.len(),
            windows.len()
        );
    }
    let sensors: Vec<SensorKind> = rec.channels().iter().map(|c| c.kind).collect();
    let mut out = Vec::with_capacity(windows.len());
    for (w, l) in windows.iter().zip(labels) {
        if w.index != l.index || (w.start_ms(rate) - l.start_ms).abs() > 1e-9 {
            anyhow::bail!(
                "label manifest window {} starts at {} ms but the recording window starts at {} ms; \
                 re-run `psent label` with the current window settings",
                l.index,
                l.start_ms,
                w.start_ms(rate)
            );
        }
        let label = WindowLabel::parse(&l.label)
            .map_err(|_| anyhow::anyhow!("bad label {} in manifest", l.label))?;
        let channels: Vec<Vec<f32>> = rec
            .channels()
            .iter()
            .map(|c| c.samples[w.start_sample..w.start_sample + w.len_samples].to_vec())
            .collect();
        out.push(RawWindow {
            session: rec.meta.clone(),
            start_ms: l.start_ms,
            label,
            sensors: sensors.clone(),
            channels,
            augmentation: psent_core::label::Augmentation::None,
        });
    }
    Ok(out)
}

/// Keep all breach windows plus `ratio` non-breach per breach, seeded and
/// deterministic per session.
fn subsample(windows: Vec<RawWindow>, ratio: f64, rng: &mut SeedRng) -> Vec<RawWindow> {
    let n_breach = windows.iter().filter(|w| w.label.is_breach()).count();
    let keep_non_breach = ((n_breach.max(1) as f64) * ratio).ceil() as usize;
    let non_breach_idx: Vec<usize> = windows
        .iter()
        .enumerate()
        .filter(|(_, w)| !w.label.is_breach())
        .map(|(i, _)| i)
        .collect();
    let mut chosen: Vec<usize> = non_breach_idx.clone();
    rng.shuffle(&mut chosen);
    chosen.truncate(keep_non_breach.min(non_breach_idx.len()));
    chosen.sort_unstable();
    let mut keep = vec![false; windows.len()];
    for (i, w) in windows.iter().enumerate() {
        if w.label.is_breach() {
            keep[i] = true;
        }
    }
    for i in chosen {
        keep[i] = true;
    }
    windows
        .into_iter()
        .zip(keep)
        .filter_map(|(w, k)| k.then_some(w))
        .collect()
}

/// Run the command.
pub fn run(args: &FeaturizeArgs, cfg: &RunConfig) -> anyhow::Result<()> {
    let sessions = session::list_sessions(&args.data)?;
    if sessions.is_empty() {
        anyhow::bail!("no sessions under {}", args.data.display());
    }
    let keys: Vec<String> = sessions.iter().map(|(k, _)| k.clone()).collect();
    let split = split_cv(&keys, &cfg.cv_plan())?;

    let tag = sensor_tag(&args.sensors);
    let tag_dir = args.data.join(session::FEATURES_DIR).join(&tag);
    fs::create_dir_all(&tag_dir).with_context(|| format!("creating {}", tag_dir.display()))?;

    let labels_dir = args.data.join(session::LABELS_DIR);
    let mut total_windows = 0usize;
    for (si, (key, dir)) in sessions.iter().enumerate() {
        let labels = crate::commands::label::read_labels(&labels_dir.join(format!("{key}.jsonl")))
            .with_context(|| format!("session {key} (run `psent label` first)"))?;
        let rec = wav::load_recording(dir, Some(&args.sensors))
            .with_context(|| format!("session {key}"))?;
        let rate = rec.sample_rate_hz;
        let mut windows = cut_windows(&rec, &labels, cfg).with_context(|| format!("session {key}"))?;

        let is_test = split.test_sessions.contains(key);
        if !is_test && !args.all_windows {
            let mut rng = SeedRng::with_stream(cfg.train.seed, 1000 + si as u64);
            windows = subsample(windows, cfg.dataset.non_breach_ratio, &mut rng);
            if cfg.dataset.augment {
                windows = augment_breach_class(&windows, rate)?;
            }
        }

        let out_dir = tag_dir.join(key);
        if out_dir.exists() {
            // Rebuild from scratch so stale tensors from a previous run
            // with different settings cannot leak into the index.
            fs::remove_dir_all(&out_dir)
                .with_context(|| format!("clearing {}", out_dir.display()))?;
        }
        fs::create_dir_all(&out_dir)
            .with_context(|| format!("creating {}", out_dir.display()))?;

        let params = cfg.mel_params(rate);
        let bank = mel_filterbank(&params)?;
        let index_path = out_dir.join("index.jsonl");
        let mut index_buf = Vec::new();
        for (wi, w) in windows.iter().enumerate() {
            let spectra: Vec<_> = w
                .channels
                .iter()
                .map(|ch| mel_spectrogram_with(ch, &params, &bank))
                .collect::<Result<_, _>>()?;
            let stack = fuse(&spectra)?;
            let file = format!("w{wi:05}.mspc");
            tensor_io::save_stack(&out_dir.join(&file), &stack)?;
            let entry = IndexEntry {
                file,
                subject: w.session.subject.clone(),
                level: w.session.level.clone(),
                side: w.session.side.clone(),
                start_epoch_ms: w.session.start_epoch_ms,
                start_ms: w.start_ms,
                label: w.label.as_str().to_string(),
                sensors: w.sensors.iter().map(|k| k.as_str().to_string()).collect(),
                augmentation: augmentation_tag(&w.augmentation),
            };
            serde_json::to_writer(&mut index_buf, &entry)?;
            index_buf.push(b'\n');
        }
        fs::File::create(&index_path)
            .and_then(|mut f| f.write_all(&index_buf))
            .map_err(|e| FormatError::io(&index_path, e))?;
        total_windows += windows.len();
        log::info!("featurized {key}: {} windows", windows.len());
    }

    session::update_manifest_nested(
        &args.data,
        "featurize",
        &tag,
        serde_json::json!({
            "sensors": args.sensors.iter().map(|k| k.as_str()).collect::<Vec<_>>(),
            "augment": cfg.dataset.augment,
            "non_breach_ratio": cfg.dataset.non_breach_ratio,
            "all_windows": args.all_windows,
            "windows": total_windows,
            "test_sessions": split.test_sessions,
        }),
    )?;
    Ok(())
}
