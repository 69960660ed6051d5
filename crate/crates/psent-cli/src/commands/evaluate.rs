//! `psent evaluate`: re-score trained runs on their held-out test sessions
//! and compare configurations.
//!
//! Each run directory (from `psent train`) carries a `run.json` naming its
//! dataset, sensor tag, split parameters, and fold checkpoints. The command
//! reloads every checkpoint, reruns test inference, and prints a summary
//! table with fold-mean recall, std, 95% CI, and a pooled-variance t-test
//! against a reference run. With `--bmd-volumes` the test sessions are
//! additionally stratified by subject bone density and scored per stratum.

use crate::commands::train::{arch_config, RunFile};
use crate::config::RunConfig;
use crate::dataset::{class_index, load_sessions};
use crate::session;
use crate::tensor_io;
use crate::volume_io;
use crate::FormatError;
use anyhow::Context;
use psent_core::eval::{
    bmd_mean_hu, mean_std_ci, pairwise_t_test, split_cv, BmdAssessment, BmdStratum, CvPlan,
    EllipseRoi, TTestKind,
};
use psent_core::label::LabeledWindow;
use psent_core::nn::{evaluate, FocalLossParams};
use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

/// Density stratification inputs.
pub struct BmdArgs {
    /// Directory of `<subject>.huv` volumes.
    pub volumes: PathBuf,
    /// ROI center in the axial plane, mm.
    pub center_mm: [f64; 2],
    /// ROI area, mm².
    pub area_mm2: f64,
    /// ROI aspect ratio (x semi-axis over y semi-axis).
    pub aspect: f64,
    /// Axial slice range, inclusive start and exclusive end; `None` uses
    /// the full stack.
    pub slices: Option<(usize, usize)>,
    /// Normal/abnormal threshold, HU.
    pub threshold_hu: f64,
}

/// Parsed `evaluate` arguments.
pub struct EvaluateArgs {
    /// Run directories to score.
    pub runs: Vec<PathBuf>,
    /// Reference run for t-tests; defaults to the first run.
    pub reference: Option<PathBuf>,
    /// Override the dataset root recorded in each `run.json`.
    pub data: Option<PathBuf>,
    /// Where to write the summary CSV; defaults to `evaluation.csv` in the
    /// first run's parent directory.
    pub out: Option<PathBuf>,
    /// Density stratification, when requested.
    pub bmd: Option<BmdArgs>,
}

/// Per-session test score: (session, subject, breach recall, non-breach
/// recall). Recalls are `None` when the session holds no window of that
/// class.
type SessionScore = (String, String, Option<f64>, Option<f64>);

/// One scored run.
struct ScoredRun {
    name: String,
    /// Per-fold test recalls, percent.
    breach_pct: Vec<f64>,
    non_breach_pct: Vec<f64>,
    /// Per fold, per test session.
    sessions: Vec<Vec<SessionScore>>,
}

fn score_run(
    run_dir: &Path,
    data_override: Option<&Path>,
    cfg: &RunConfig,
) -> anyhow::Result<ScoredRun> {
    let run: RunFile = session::load_json(&run_dir.join("run.json"), "run record")?;
    let data = data_override
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from(&run.data));
    let tag_dir = data.join(session::FEATURES_DIR).join(&run.tag);
    if !tag_dir.exists() {
        anyhow::bail!(
            "features for tag {} not found under {}",
            run.tag,
            data.display()
        );
    }
    let sessions = session::list_sessions(&data)?;
    let keys: Vec<String> = sessions.iter().map(|(k, _)| k.clone()).collect();
    let plan = CvPlan {
        test_fraction: run.test_fraction,
        n_folds: run.n_folds,
        n_runs: run.checkpoints.len().max(1),
        seed: run.seed,
    };
    let split = split_cv(&keys, &plan)?;
    let test_windows: Vec<LabeledWindow> = load_sessions(&tag_dir, &split.test_sessions, false)?;
    let truth: Vec<usize> = test_windows.iter().map(|w| class_index(w.label)).collect();
    let test_set = crate::dataset::to_dataset(&test_windows, "test split")?;
    // Validate the recorded architecture name even though the checkpoint
    // header is authoritative for shapes.
    let _ = arch_config(&run.arch, run.sensors.len())?;

    let fl = FocalLossParams {
        gamma: cfg.train.gamma,
        alpha: [0.5, 0.5],
    };
    let mut scored = ScoredRun {
        name: format!("{} [{}]", run.tag, run.arch),
        breach_pct: Vec::new(),
        non_breach_pct: Vec::new(),
        sessions: Vec::new(),
    };
    for ckpt in &run.checkpoints {
        let model = tensor_io::load_checkpoint(&run_dir.join(ckpt))
            .with_context(|| format!("run {}", run_dir.display()))?;
        let metrics = evaluate(&model, &test_set, cfg.train.batch_size, &fl)?;
        if let Some(r) = metrics.recall[1] {
            scored.breach_pct.push(r * 100.0);
        }
        if let Some(r) = metrics.recall[0] {
            scored.non_breach_pct.push(r * 100.0);
        }
        let mut by_session = Vec::new();
        for key in &split.test_sessions {
            let idx: Vec<usize> = test_windows
                .iter()
                .enumerate()
                .filter(|(_, w)| &w.meta.session.key() == key)
                .map(|(i, _)| i)
                .collect();
            let recall_of = |class: usize| -> Option<f64> {
                let n = idx.iter().filter(|&&i| truth[i] == class).count();
                if n == 0 {
                    return None;
                }
                let hit = idx
                    .iter()
                    .filter(|&&i| truth[i] == class && metrics.predictions[i] == class)
                    .count();
                Some(hit as f64 / n as f64 * 100.0)
            };
            let subject = idx
                .first()
                .map(|&i| test_windows[i].meta.session.subject.clone())
                .unwrap_or_default();
            by_session.push((key.clone(), subject, recall_of(1), recall_of(0)));
        }
        scored.sessions.push(by_session);
    }
    if scored.breach_pct.len() < 2 {
        anyhow::bail!(
            "run {} has {} scored folds; need at least 2 for summary statistics",
            run_dir.display(),
            scored.breach_pct.len()
        );
    }
    Ok(scored)
}

fn fmt_cell(values: &[f64]) -> anyhow::Result<String> {
    let s = mean_std_ci(values)?;
    Ok(format!(
        "{:.1}±{:.2} ({:.1}-{:.1})",
        s.mean, s.std, s.ci_low, s.ci_high
    ))
}

fn stratum_of(
    subject: &str,
    bmd: &BmdArgs,
    cache: &mut BTreeMap<String, BmdAssessment>,
) -> anyhow::Result<BmdAssessment> {
    if let Some(a) = cache.get(subject) {
        return Ok(*a);
    }
    let path = bmd.volumes.join(format!("{subject}.huv"));
    let vol = volume_io::load_volume(&path)?;
    let roi = EllipseRoi::from_area(bmd.center_mm, bmd.area_mm2, bmd.aspect)?;
    let slices = match bmd.slices {
        Some((lo, hi)) => lo..hi,
        None => 0..vol.dims()[2],
    };
    let mean_hu = bmd_mean_hu(&vol, &roi, slices)?;
    let a = BmdAssessment::new(mean_hu, bmd.threshold_hu);
    cache.insert(subject.to_string(), a);
    Ok(a)
}

/// Per-stratum fold-mean recalls for one run.
fn bmd_rows(
    run: &ScoredRun,
    bmd: &BmdArgs,
    cache: &mut BTreeMap<String, BmdAssessment>,
    csv: &mut String,
    table: &mut String,
) -> anyhow::Result<()> {
    // Fold-level recall per stratum: mean over that stratum's sessions.
    let mut per_stratum: BTreeMap<&'static str, (usize, Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for stratum in [BmdStratum::Normal, BmdStratum::Abnormal] {
        let mut breach = Vec::new();
        let mut non_breach = Vec::new();
        let mut n_sessions = 0usize;
        for fold in &run.sessions {
            let mut fb = Vec::new();
            let mut fn_ = Vec::new();
            let mut seen = 0usize;
            for (_, subject, br, nr) in fold {
                if stratum_of(subject, bmd, cache)?.stratum != stratum {
                    continue;
                }
                seen += 1;
                if let Some(r) = br {
                    fb.push(*r);
                }
                if let Some(r) = nr {
                    fn_.push(*r);
                }
            }
            n_sessions = seen;
            if !fb.is_empty() {
                breach.push(fb.iter().sum::<f64>() / fb.len() as f64);
            }
            if !fn_.is_empty() {
                non_breach.push(fn_.iter().sum::<f64>() / fn_.len() as f64);
            }
        }
        per_stratum.insert(stratum.as_str(), (n_sessions, breach, non_breach));
    }

    let p_breach = {
        let a = &per_stratum["normal"].1;
        let b = &per_stratum["abnormal"].1;
        if a.len() >= 2 && b.len() >= 2 {
            Some(pairwise_t_test(a, b, TTestKind::Pooled)?.p)
        } else {
            None
        }
    };
    for (name, (n_sessions, breach, non_breach)) in &per_stratum {
        let breach_cell = if breach.len() >= 2 {
            fmt_cell(breach)?
        } else {
            "undefined".to_string()
        };
        let nb_cell = if non_breach.len() >= 2 {
            fmt_cell(non_breach)?
        } else {
            "undefined".to_string()
        };
        let p_cell = match (*name, p_breach) {
            ("abnormal", Some(p)) => format!("{p:.3}"),
            ("abnormal", None) => "undefined".to_string(),
            _ => String::new(),
        };
        csv.push_str(&format!(
            "{},{},{},{},{},{}\n",
            run.name, name, n_sessions, breach_cell, nb_cell, p_cell
        ));
        table.push_str(&format!(
            "  {:<32} {:<10} n={:<3} breach {:<24} non-breach {:<24} {}\n",
            run.name, name, n_sessions, breach_cell, nb_cell, p_cell
        ));
    }
    Ok(())
}

/// Run the command.
pub fn run(args: &EvaluateArgs, cfg: &RunConfig) -> anyhow::Result<()> {
    if args.runs.is_empty() {
        anyhow::bail!("pass at least one run directory");
    }
    let reference = args.reference.clone().unwrap_or_else(|| args.runs[0].clone());
    let mut scored: Vec<(PathBuf, ScoredRun)> = Vec::new();
    let mut ref_scored: Option<ScoredRun> = None;
    for dir in std::iter::once(&reference).chain(args.runs.iter().filter(|r| **r != reference)) {
        let s = score_run(dir, args.data.as_deref(), cfg)
            .with_context(|| format!("scoring {}", dir.display()))?;
        if dir == &reference {
            ref_scored = Some(ScoredRun {
                name: s.name.clone(),
                breach_pct: s.breach_pct.clone(),
                non_breach_pct: s.non_breach_pct.clone(),
                sessions: Vec::new(),
            });
        }
        scored.push((dir.clone(), s));
    }
    let reference_run = ref_scored.expect("reference was scored first");

    let mut csv = String::from(
        "config,folds,breach_recall,non_breach_recall,p_breach_vs_reference,p_non_breach_vs_reference\n",
    );
    let mut table = String::from("configuration comparison (fold-mean test recall, %):\n");
    for (dir, s) in &scored {
        let is_ref = dir == &reference;
        let (p_b, p_nb) = if is_ref {
            ("reference".to_string(), "reference".to_string())
        } else {
            let tb = pairwise_t_test(&s.breach_pct, &reference_run.breach_pct, TTestKind::Pooled)?;
            let tnb = pairwise_t_test(
                &s.non_breach_pct,
                &reference_run.non_breach_pct,
                TTestKind::Pooled,
            )?;
            (format!("{:.3}", tb.p), format!("{:.3}", tnb.p))
        };
        let b = fmt_cell(&s.breach_pct)?;
        let nb = fmt_cell(&s.non_breach_pct)?;
        csv.push_str(&format!(
            "{},{},{},{},{},{}\n",
            s.name,
            s.breach_pct.len(),
            b,
            nb,
            p_b,
            p_nb
        ));
        table.push_str(&format!(
            "  {:<32} breach {:<24} non-breach {:<24} p={} / {}\n",
            s.name, b, nb, p_b, p_nb
        ));
    }

    let mut bmd_csv = String::new();
    if let Some(bmd) = &args.bmd {
        bmd_csv.push_str("config,stratum,n_sessions,breach_recall,non_breach_recall,p_breach_normal_vs_abnormal\n");
        table.push_str("density strata:\n");
        let mut cache = BTreeMap::new();
        for (_, s) in &scored {
            bmd_rows(s, bmd, &mut cache, &mut bmd_csv, &mut table)?;
        }
    }

    let out = args.out.clone().unwrap_or_else(|| {
        args.runs[0]
            .parent()
            .unwrap_or(Path::new("."))
            .join("evaluation.csv")
    });
    fs::write(&out, &csv).map_err(|e| FormatError::io(&out, e))?;
    if !bmd_csv.is_empty() {
        let bmd_path = out.with_file_name("bmd.csv");
        fs::write(&bmd_path, &bmd_csv).map_err(|e| FormatError::io(&bmd_path, e))?;
    }
    println!("{table}");
    println!("wrote {}", out.display());
    Ok(())
}
