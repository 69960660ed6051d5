//! `psent`: batch tooling for the cortical breach-detection pipeline.

use clap::{Args, Parser, Subcommand};
use psent_cli::commands::{self, bench, evaluate, featurize, infer, label, simulate, train};
use psent_cli::config::RunConfig;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "psent",
    version,
    about = "Synthesize, label, featurize, train, and evaluate pedicle-drilling breach detectors"
)]
struct Cli {
    /// TOML config file (defaults + PSENT_* env vars otherwise).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker thread cap for parallel sections.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic drilling corpus as session directories.
    Simulate(SimulateCli),
    /// Derive per-window labels from tracking geometry.
    Label(LabelCli),
    /// Turn labeled recordings into fused spectrogram tensors.
    Featurize(FeaturizeCli),
    /// Cross-validated training over a featurized dataset.
    Train(TrainCli),
    /// Re-score trained runs and compare configurations.
    Evaluate(EvaluateCli),
    /// Run a checkpoint over one session's recording.
    Infer(InferCli),
    /// Per-window featurize and inference timing.
    BenchLatency(BenchCli),
}

#[derive(Args)]
struct SimulateCli {
    /// Dataset root to create.
    #[arg(long)]
    out: PathBuf,
    /// Number of sessions.
    #[arg(long, default_value_t = 20)]
    sessions: usize,
    /// Corpus base seed.
    #[arg(long, default_value_t = 41_000)]
    seed: u64,
    /// Sensors to synthesize (comma-separated, or `all`).
    #[arg(long, default_value = "all")]
    sensors: String,
}

#[derive(Args)]
struct LabelCli {
    /// Dataset root.
    #[arg(long)]
    data: PathBuf,
    /// Only these session keys (comma-separated); all when omitted.
    #[arg(long)]
    sessions: Option<String>,
}

#[derive(Args)]
struct FeaturizeCli {
    /// Dataset root.
    #[arg(long)]
    data: PathBuf,
    /// Sensors to fuse (comma-separated, channel order).
    #[arg(long)]
    sensors: String,
    /// Augment breach windows of training sessions.
    #[arg(long)]
    augment: bool,
    /// Non-breach windows kept per breach window in training sessions.
    #[arg(long)]
    ratio: Option<f64>,
    /// Keep every window of every session (skip subsampling).
    #[arg(long)]
    all_windows: bool,
}

#[derive(Args)]
struct TrainCli {
    /// Dataset root.
    #[arg(long)]
    data: PathBuf,
    /// Sensors whose feature tag to train on.
    #[arg(long)]
    sensors: String,
    /// Run directory to create.
    #[arg(long)]
    out: PathBuf,
    /// Architecture: full or width_scaled.
    #[arg(long)]
    arch: Option<String>,
    /// Training epochs per fold.
    #[arg(long)]
    epochs: Option<usize>,
    /// Batch size.
    #[arg(long)]
    batch_size: Option<usize>,
    /// Adam learning rate.
    #[arg(long)]
    learning_rate: Option<f64>,
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Cross-validation folds.
    #[arg(long)]
    folds: Option<usize>,
}

#[derive(Args)]
struct EvaluateCli {
    /// Run directories to score (comma-separated or repeated).
    #[arg(long, required = true, value_delimiter = ',')]
    runs: Vec<PathBuf>,
    /// Reference run for t-tests; first run when omitted.
    #[arg(long)]
    reference: Option<PathBuf>,
    /// Override the dataset root recorded in run.json.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Summary CSV path.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Directory of <subject>.huv volumes; enables density strata.
    #[arg(long)]
    bmd_volumes: Option<PathBuf>,
    /// ROI center in the axial plane, mm (x,y).
    #[arg(long, default_value = "24,24")]
    bmd_center: String,
    /// ROI area, mm².
    #[arg(long, default_value_t = 100.0)]
    bmd_area: f64,
    /// ROI aspect ratio.
    #[arg(long, default_value_t = 1.0)]
    bmd_aspect: f64,
    /// Axial slice range lo:hi (exclusive hi); full stack when omitted.
    #[arg(long)]
    bmd_slices: Option<String>,
    /// Normal/abnormal threshold, HU.
    #[arg(long, default_value_t = psent_core::eval::DEFAULT_BMD_THRESHOLD_HU)]
    bmd_threshold: f64,
}

#[derive(Args)]
struct InferCli {
    /// Checkpoint to run.
    #[arg(long)]
    checkpoint: PathBuf,
    /// Session directory holding the recording.
    #[arg(long)]
    session: PathBuf,
    /// Sensors to fuse (comma-separated, channel order).
    #[arg(long)]
    sensors: String,
    /// Output JSONL; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchCli {
    /// Checkpoint to time; a fresh seeded model when omitted.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Input channels of the fresh model.
    #[arg(long, default_value_t = 1)]
    channels: usize,
    /// Timed iterations.
    #[arg(long, default_value_t = 100)]
    iters: usize,
    /// Seed for the synthetic window and fresh weights.
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Optional JSON report path.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_pair(s: &str) -> anyhow::Result<[f64; 2]> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 2 {
        anyhow::bail!("expected two comma-separated numbers, got {s}");
    }
    Ok([parts[0].trim().parse()?, parts[1].trim().parse()?])
}

fn parse_range(s: &str) -> anyhow::Result<(usize, usize)> {
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() != 2 {
        anyhow::bail!("expected lo:hi, got {s}");
    }
    Ok((parts[0].trim().parse()?, parts[1].trim().parse()?))
}

fn dispatch(cli: Cli) -> anyhow::Result<()> {
    let mut cfg = RunConfig::resolve(cli.config.as_deref())?;
    match cli.command {
        Command::Simulate(a) => {
            let sensors = commands::parse_sensor_list(&a.sensors)?;
            simulate::run(&simulate::SimulateArgs {
                out: a.out,
                sessions: a.sessions,
                seed: a.seed,
                sensors,
            })
        }
        Command::Label(a) => {
            let sessions = a
                .sessions
                .map(|s| s.split(',').map(|k| k.trim().to_string()).collect())
                .unwrap_or_default();
            label::run(
                &label::LabelArgs {
                    data: a.data,
                    sessions,
                },
                &cfg,
            )
        }
        Command::Featurize(a) => {
            let sensors = commands::parse_sensor_list(&a.sensors)?;
            if a.augment {
                cfg.dataset.augment = true;
            }
            if let Some(r) = a.ratio {
                cfg.dataset.non_breach_ratio = r;
            }
            featurize::run(
                &featurize::FeaturizeArgs {
                    data: a.data,
                    sensors,
                    all_windows: a.all_windows,
                },
                &cfg,
            )
        }
        Command::Train(a) => {
            let sensors = commands::parse_sensor_list(&a.sensors)?;
            if let Some(v) = a.arch {
                cfg.model.arch = v;
            }
            if let Some(v) = a.epochs {
                cfg.train.epochs = v;
            }
            if let Some(v) = a.batch_size {
                cfg.train.batch_size = v;
            }
            if let Some(v) = a.learning_rate {
                cfg.train.learning_rate = v;
            }
            if let Some(v) = a.seed {
                cfg.train.seed = v;
            }
            if let Some(v) = a.folds {
                cfg.cv.n_folds = v;
                cfg.cv.n_runs = v;
            }
            train::run(
                &train::TrainArgs {
                    data: a.data,
                    sensors,
                    out: a.out,
                },
                &cfg,
            )
        }
        Command::Evaluate(a) => {
            let bmd = match a.bmd_volumes {
                None => None,
                Some(volumes) => Some(evaluate::BmdArgs {
                    volumes,
                    center_mm: parse_pair(&a.bmd_center)?,
                    area_mm2: a.bmd_area,
                    aspect: a.bmd_aspect,
                    slices: a.bmd_slices.as_deref().map(parse_range).transpose()?,
                    threshold_hu: a.bmd_threshold,
                }),
            };
            evaluate::run(
                &evaluate::EvaluateArgs {
                    runs: a.runs,
                    reference: a.reference,
                    data: a.data,
                    out: a.out,
                    bmd,
                },
                &cfg,
            )
        }
        Command::Infer(a) => {
            let sensors = commands::parse_sensor_list(&a.sensors)?;
            infer::run(
                &infer::InferArgs {
                    checkpoint: a.checkpoint,
                    session: a.session,
                    sensors,
                    out: a.out,
                },
                &cfg,
            )
        }
        Command::BenchLatency(a) => bench::run(
            &bench::BenchArgs {
                checkpoint: a.checkpoint,
                channels: a.channels,
                iters: a.iters,
                seed: a.seed,
                out: a.out,
            },
            &cfg,
        ),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    if let Some(jobs) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
        {
            log::warn!("thread pool already initialized: {e}");
        }
    }
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let record = serde_json::json!({
                "error": format!("{e:#}"),
            });
            eprintln!("{record}");
            ExitCode::FAILURE
        }
    }
}
