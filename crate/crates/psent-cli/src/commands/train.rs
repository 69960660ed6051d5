//! `psent train`: cross-validated training over a featurized dataset.
//!
//! Sessions are split once into a held-out test set and `n_folds`
//! train/validation folds (deterministic in the seed). Each fold trains a
//! model from scratch, keeps its best-validation checkpoint, and is scored
//! on the common test set. Outputs under `--out`:
//!
//! - `fold<i>.sern`: best checkpoint of fold `i`.
//! - `history.jsonl`: one line per epoch per fold.
//! - `metrics.json`: per-fold validation/test metrics with per-session
//!   test breakdown, plus fold-mean summaries.
//! - `summary.csv`: one row per class with mean, std, and 95% CI of the
//!   fold test recalls.
//! - `run.json`: everything `psent evaluate` needs to re-score the run.

use crate::commands::sensor_tag;
use crate::config::RunConfig;
use crate::dataset::{load_sessions, to_dataset};
use crate::session;
use crate::tensor_io;
use crate::FormatError;
use anyhow::Context;
use psent_core::eval::{mean_std_ci, split_cv, SummaryStats};
use psent_core::label::{DatasetSplit, LabeledWindow};
use psent_core::nn::{
    evaluate, train, AdamConfig, ArchConfig, Dataset, FocalLossParams, TrainConfig,
};
use psent_core::signal::SensorKind;
use serde::{Deserialize, Serialize};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

/// Parsed `train` arguments.
pub struct TrainArgs {
    /// Dataset root.
    pub data: PathBuf,
    /// Sensors whose feature tag to train on.
    pub sensors: Vec<SensorKind>,
    /// Run directory to create.
    pub out: PathBuf,
}

/// Per-class recall pair, `None` when the class was absent.
pub type RecallPair = [Option<f64>; 2];

/// Test metrics of one session.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SessionScore {
    /// Session key.
    pub session: String,
    /// Subject the session belongs to.
    pub subject: String,
    /// Breach windows in the session.
    pub n_breach: usize,
    /// Non-breach windows in the session.
    pub n_non_breach: usize,
    /// Recall on the session's breach windows.
    pub breach_recall: Option<f64>,
    /// Recall on the session's non-breach windows.
    pub non_breach_recall: Option<f64>,
}

/// One fold's outcome.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FoldRecord {
    /// Fold index.
    pub fold: usize,
    /// Checkpoint file name.
    pub checkpoint: String,
    /// Epoch whose validation loss was best.
    pub best_epoch: Option<usize>,
    /// Validation recalls of the kept checkpoint.
    pub val_recall: RecallPair,
    /// Test-set loss.
    pub test_loss: f64,
    /// Test recalls.
    pub test_recall: RecallPair,
    /// Per-session test breakdown.
    pub per_session: Vec<SessionScore>,
}

/// Fold-mean summary of one class's test recall.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ClassSummary {
    /// `breach` or `non_breach`.
    pub class: String,
    /// Per-fold recalls, percent.
    pub fold_recalls_pct: Vec<f64>,
    /// Mean, percent.
    pub mean_pct: f64,
    /// Sample standard deviation, percent.
    pub std_pct: f64,
    /// 95% CI lower bound, percent.
    pub ci_low_pct: f64,
    /// 95% CI upper bound, percent.
    pub ci_high_pct: f64,
}

/// The `metrics.json` document.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MetricsFile {
    /// Sensor tag trained on.
    pub tag: String,
    /// Architecture name.
    pub arch: String,
    /// Held-out test sessions.
    pub test_sessions: Vec<String>,
    /// Per-fold outcomes.
    pub folds: Vec<FoldRecord>,
    /// Fold-mean summaries, breach then non-breach.
    pub summary: Vec<ClassSummary>,
}

/// The `run.json` document: enough to re-score the run elsewhere.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunFile {
    /// Dataset root the run trained on.
    pub data: String,
    /// Sensor tag.
    pub tag: String,
    /// Sensors, channel order.
    pub sensors: Vec<String>,
    /// Architecture name.
    pub arch: String,
    /// Seed the split and training derived from.
    pub seed: u64,
    /// Test fraction of the split.
    pub test_fraction: f64,
    /// Fold count.
    pub n_folds: usize,
    /// Fold checkpoints, in fold order.
    pub checkpoints: Vec<String>,
}

/// Architecture from its config name.
pub fn arch_config(name: &str, in_channels: usize) -> anyhow::Result<ArchConfig> {
    match name {
        "full" => Ok(ArchConfig::full(in_channels)),
        "width_scaled" => Ok(ArchConfig::width_scaled(in_channels)),
        other => anyhow::bail!("unknown architecture {other} (expected full or width_scaled)"),
    }
}

/// Recall over the subset of `predictions` whose truth is `class`.
fn subset_recall(truth: &[usize], predictions: &[usize], class: usize) -> (usize, Option<f64>) {
    let mut n = 0usize;
    let mut hit = 0usize;
    for (&t, &p) in truth.iter().zip(predictions) {
        if t == class {
            n += 1;
            if p == class {
                hit += 1;
            }
        }
    }
    (n, (n > 0).then(|| hit as f64 / n as f64))
}

fn per_session_scores(
    windows: &[LabeledWindow],
    truth: &[usize],
    predictions: &[usize],
    sessions: &[String],
) -> Vec<SessionScore> {
    sessions
        .iter()
        .map(|key| {
            let idx: Vec<usize> = windows
                .iter()
                .enumerate()
                .filter(|(_, w)| &w.meta.session.key() == key)
                .map(|(i, _)| i)
                .collect();
            let t: Vec<usize> = idx.iter().map(|&i| truth[i]).collect();
            let p: Vec<usize> = idx.iter().map(|&i| predictions[i]).collect();
            let (n_breach, breach_recall) = subset_recall(&t, &p, 1);
            let (n_non_breach, non_breach_recall) = subset_recall(&t, &p, 0);
            let subject = idx
                .first()
                .map(|&i| windows[i].meta.session.subject.clone())
                .unwrap_or_default();
            SessionScore {
                session: key.clone(),
                subject,
                n_breach,
                n_non_breach,
                breach_recall,
                non_breach_recall,
            }
        })
        .collect()
}

fn class_summary(class: &str, fold_recalls: &[f64]) -> anyhow::Result<ClassSummary> {
    let pct: Vec<f64> = fold_recalls.iter().map(|r| r * 100.0).collect();
    let stats: SummaryStats = mean_std_ci(&pct)?;
    Ok(ClassSummary {
        class: class.to_string(),
        fold_recalls_pct: pct,
        mean_pct: stats.mean,
        std_pct: stats.std,
        ci_low_pct: stats.ci_low,
        ci_high_pct: stats.ci_high,
    })
}

/// Write `summary.csv` from class summaries.
pub fn write_summary_csv(path: &Path, summaries: &[ClassSummary]) -> Result<(), FormatError> {
    let mut csv = String::from("class,mean_pct,std_pct,ci_low_pct,ci_high_pct,folds\n");
    for s in summaries {
        csv.push_str(&format!(
            "{},{:.2},{:.2},{:.2},{:.2},{}\n",
            s.class,
            s.mean_pct,
            s.std_pct,
            s.ci_low_pct,
            s.ci_high_pct,
            s.fold_recalls_pct.len()
        ));
    }
    fs::write(path, csv).map_err(|e| FormatError::io(path, e))
}

/// Run the command.
pub fn run(args: &TrainArgs, cfg: &RunConfig) -> anyhow::Result<()> {
    let tag = sensor_tag(&args.sensors);
    let tag_dir = args.data.join(session::FEATURES_DIR).join(&tag);
    if !tag_dir.exists() {
        anyhow::bail!(
            "no features for sensor tag {tag} under {} (run `psent featurize` first)",
            args.data.display()
        );
    }
    let sessions = session::list_sessions(&args.data)?;
    let keys: Vec<String> = sessions.iter().map(|(k, _)| k.clone()).collect();
    let split = split_cv(&keys, &cfg.cv_plan())?;
    let arch = arch_config(&cfg.model.arch, args.sensors.len())?;

    fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))?;

    let test_windows = load_sessions(&tag_dir, &split.test_sessions, false)?;
    let test_truth: Vec<usize> = test_windows
        .iter()
        .map(|w| crate::dataset::class_index(w.label))
        .collect();
    let test_set: Dataset<f32> = to_dataset(&test_windows, "test split")?;

    let fl = FocalLossParams {
        gamma: cfg.train.gamma,
        alpha: [0.5, 0.5],
    };
    let n_runs = cfg.cv.n_runs.min(split.folds.len());
    let history_path = args.out.join("history.jsonl");
    let mut history_buf = Vec::new();
    let mut folds = Vec::new();
    let mut breach_recalls = Vec::new();
    let mut non_breach_recalls = Vec::new();
    for (fi, fold) in split.folds.iter().take(n_runs).enumerate() {
        let train_windows = load_sessions(&tag_dir, &fold.train_sessions, true)?;
        let val_windows = load_sessions(&tag_dir, &fold.val_sessions, false)?;
        let ds = DatasetSplit {
            train: train_windows,
            val: val_windows,
            test: test_windows.clone(),
        };
        ds.validate()?;
        let train_set = to_dataset(&ds.train, "train split")?;
        let val_set = to_dataset(&ds.val, "validation split")?;
        let [tc, vc, _] = ds.counts();
        log::info!(
            "fold {fi}: train {}+{} breach/non-breach, val {}+{}",
            tc.breach,
            tc.non_breach,
            vc.breach,
            vc.non_breach
        );

        let tcfg = TrainConfig {
            epochs: cfg.train.epochs,
            batch_size: cfg.train.batch_size,
            adam: AdamConfig {
                lr: cfg.train.learning_rate,
                ..AdamConfig::default()
            },
            gamma: cfg.train.gamma,
            alpha: None,
            seed: cfg.train.seed.wrapping_add(fi as u64),
        };
        let outcome = train(&arch, &tcfg, &train_set, &val_set)
            .with_context(|| format!("fold {fi} training"))?;
        for e in &outcome.history {
            let line = serde_json::json!({
                "fold": fi,
                "epoch": e.epoch,
                "train_loss": e.train_loss,
                "val_loss": e.val_loss,
                "val_recall": e.val_recall,
            });
            serde_json::to_writer(&mut history_buf, &line)?;
            history_buf.push(b'\n');
        }

        let mut model = outcome.model;
        let checkpoint = format!("fold{fi}.sern");
        tensor_io::save_checkpoint(&args.out.join(&checkpoint), &mut model)?;

        let val_metrics = evaluate(&model, &val_set, cfg.train.batch_size, &fl)?;
        let test_metrics = evaluate(&model, &test_set, cfg.train.batch_size, &fl)?;
        let per_session = per_session_scores(
            &test_windows,
            &test_truth,
            &test_metrics.predictions,
            &split.test_sessions,
        );
        if let Some(r) = test_metrics.recall[1] {
            breach_recalls.push(r);
        }
        if let Some(r) = test_metrics.recall[0] {
            non_breach_recalls.push(r);
        }
        folds.push(FoldRecord {
            fold: fi,
            checkpoint,
            best_epoch: outcome.best_epoch,
            val_recall: val_metrics.recall,
            test_loss: test_metrics.loss,
            test_recall: test_metrics.recall,
            per_session,
        });
    }
    fs::File::create(&history_path)
        .and_then(|mut f| f.write_all(&history_buf))
        .map_err(|e| FormatError::io(&history_path, e))?;

    let summary = vec![
        class_summary("breach", &breach_recalls)?,
        class_summary("non_breach", &non_breach_recalls)?,
    ];
    let metrics = MetricsFile {
        tag: tag.clone(),
        arch: cfg.model.arch.clone(),
        test_sessions: split.test_sessions.clone(),
        folds: folds.clone(),
        summary: summary.clone(),
    };
    session::save_json(&args.out.join("metrics.json"), &metrics)?;
    write_summary_csv(&args.out.join("summary.csv"), &summary)?;
    session::save_json(
        &args.out.join("run.json"),
        &RunFile {
            data: args.data.display().to_string(),
            tag,
            sensors: args.sensors.iter().map(|k| k.as_str().to_string()).collect(),
            arch: cfg.model.arch.clone(),
            seed: cfg.train.seed,
            test_fraction: cfg.cv.test_fraction,
            n_folds: cfg.cv.n_folds,
            checkpoints: folds.iter().map(|f| f.checkpoint.clone()).collect(),
        },
    )?;
    for s in &summary {
        log::info!(
            "{}: {:.1}±{:.2} ({:.1}-{:.1})",
            s.class,
            s.mean_pct,
            s.std_pct,
            s.ci_low_pct,
            s.ci_high_pct
        );
    }
    Ok(())
}
