//! `psent simulate`: write a synthetic drilling corpus as session
//! directories plus per-subject HU volumes.

use crate::session::{self, files, PlanFile, TruthFile};
use crate::{mesh_io, traj_io, volume_io, wav};
use anyhow::Context;
use psent_core::eval::HuVolume;
use psent_core::rng::SeedRng;
use psent_core::signal::SensorKind;
use psent_core::simulate::{corpus, gen_signals, gen_trajectory, DrillScenario};
use rayon::prelude::*;
use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

/// Parsed `simulate` arguments.
pub struct SimulateArgs {
    /// Dataset root to create.
    pub out: std::path::PathBuf,
    /// Number of sessions.
    pub sessions: usize,
    /// Corpus base seed.
    pub seed: u64,
    /// Sensors to synthesize.
    pub sensors: Vec<SensorKind>,
}

/// Mean HU assigned to each subject cycle position. Two land above the
/// default 160 HU threshold and two below, so density stratification has
/// both strata on the default corpus.
const SUBJECT_HU: [f32; 4] = [220.0, 190.0, 140.0, 110.0];

fn write_session(dir: &Path, sc: &DrillScenario, kinds: &[SensorKind]) -> anyhow::Result<()> {
    let (traj, truth) = gen_trajectory(sc)?;
    let rec = gen_signals(sc, &traj, kinds)?;
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    wav::save_recording(dir, &rec)?;
    traj_io::save_trajectory(&dir.join(files::TRAJECTORY), &traj)?;
    traj_io::save_transform(&dir.join(files::CT_TO_CAM), &sc.ct_to_cam)?;
    mesh_io::save_ply(&dir.join(files::MESH), &sc.proxy.mesh()?)?;
    session::save_json(
        &dir.join(files::PLAN),
        &PlanFile {
            entry_ct_mm: sc.entry_point_ct(),
            exit_ct_mm: sc.exit_point_ct(),
        },
    )?;
    session::save_json(
        &dir.join(files::TRUTH),
        &TruthFile {
            entry_time_ms: truth.entry_time_ms,
            breach_time_ms: truth.breach_time_ms,
            burst_end_ms: truth.burst_end_ms,
            interval_start_ms: truth.interval.start_ms(),
            interval_end_ms: truth.interval.end_ms(),
        },
    )?;
    Ok(())
}

fn subject_volume(subject_index: usize, seed: u64) -> HuVolume {
    let dims = [48usize, 48, 24];
    let base = SUBJECT_HU[subject_index % SUBJECT_HU.len()];
    let mut rng = SeedRng::with_stream(seed, 90 + subject_index as u64);
    let values: Vec<f32> = (0..dims[0] * dims[1] * dims[2])
        .map(|_| base + 8.0 * rng.normal() as f32)
        .collect();
    HuVolume::new(dims, [1.0, 1.0, 1.5], values).expect("fixed dims match value count")
}

/// Run the command.
pub fn run(args: &SimulateArgs) -> anyhow::Result<()> {
    let scenarios = corpus(args.sessions, args.seed);
    let sessions_dir = args.out.join(session::SESSIONS_DIR);
    fs::create_dir_all(&sessions_dir)
        .with_context(|| format!("creating {}", sessions_dir.display()))?;

    scenarios
        .par_iter()
        .map(|sc| {
            let key = sc.meta.key();
            write_session(&sessions_dir.join(&key), sc, &args.sensors)
                .with_context(|| format!("session {key}"))
        })
        .collect::<anyhow::Result<Vec<()>>>()?;

    let volumes_dir = args.out.join(session::VOLUMES_DIR);
    fs::create_dir_all(&volumes_dir)
        .with_context(|| format!("creating {}", volumes_dir.display()))?;
    let subjects: BTreeSet<&str> = scenarios.iter().map(|sc| sc.meta.subject.as_str()).collect();
    for subject in subjects {
        // Subject names are S1, S2, ...; recover the cycle index.
        let idx = subject[1..].parse::<usize>().unwrap_or(1) - 1;
        let vol = subject_volume(idx, args.seed);
        volume_io::save_volume(&volumes_dir.join(format!("{subject}.huv")), &vol)?;
    }

    let keys: Vec<String> = scenarios.iter().map(|sc| sc.meta.key()).collect();
    session::update_manifest(
        &args.out,
        "simulate",
        serde_json::json!({
            "seed": args.seed,
            "sessions": keys,
            "sensors": args.sensors.iter().map(|k| k.as_str()).collect::<Vec<_>>(),
        }),
    )?;
    log::info!("wrote {} sessions under {}", scenarios.len(), args.out.display());
    Ok(())
}
