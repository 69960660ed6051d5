//! `psent bench-latency`: per-window featurize and inference timing.
//!
//! Measures the real-time path: one window of samples is featurized into
//! a fused tensor and pushed through the model, repeatedly, on a single
//! thread of the current machine. Featurization and inference are timed
//! separately; the report carries p50 and p95 of each and of the total.

use crate::commands::percentile_ms;
use crate::config::RunConfig;
use crate::session;
use crate::tensor_io;
use anyhow::Context;
use psent_core::dsp::{mel_filterbank, mel_spectrogram_with};
use psent_core::label::fuse;
use psent_core::nn::{SEResNet18, Tensor4};
use psent_core::rng::SeedRng;
use serde::{Deserialize, Serialize};
use std::path::PathBuf;
use std::time::Instant;

/// Parsed `bench-latency` arguments.
pub struct BenchArgs {
    /// Checkpoint to time; a fresh seeded model when absent.
    pub checkpoint: Option<PathBuf>,
    /// Input channels of the fresh model.
    pub channels: usize,
    /// Timed iterations.
    pub iters: usize,
    /// Seed for the synthetic window and fresh weights.
    pub seed: u64,
    /// Optional JSON report path.
    pub out: Option<PathBuf>,
}

/// p50/p95 of one stage, ms.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct StageStats {
    /// Median, ms.
    pub p50_ms: f64,
    /// 95th percentile, ms.
    pub p95_ms: f64,
}

/// The timing report.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LatencyReport {
    /// Architecture name.
    pub arch: String,
    /// Input channels.
    pub channels: usize,
    /// Timed iterations.
    pub iters: usize,
    /// Featurization stage.
    pub featurize: StageStats,
    /// Inference stage.
    pub infer: StageStats,
    /// Featurize plus infer per window.
    pub total: StageStats,
}

fn stage(samples: &[f64]) -> StageStats {
    StageStats {
        p50_ms: percentile_ms(samples, 50.0),
        p95_ms: percentile_ms(samples, 95.0),
    }
}

/// Time `iters` windows through `model`; shared by the command and the
/// latency acceptance check.
pub fn measure(
    model: &SEResNet18<f32>,
    cfg: &RunConfig,
    iters: usize,
    seed: u64,
) -> anyhow::Result<LatencyReport> {
    let channels = model.config().in_channels;
    let rate = 40_000.0;
    let window_len = (cfg.dataset.window_ms / 1000.0 * rate) as usize;
    let params = cfg.mel_params(rate);
    let bank = mel_filterbank(&params)?;
    let mut rng = SeedRng::new(seed);
    let window: Vec<Vec<f32>> = (0..channels)
        .map(|_| (0..window_len).map(|_| rng.normal() as f32 * 0.1).collect())
        .collect();

    let warmup = 3usize;
    let mut feat_ms = Vec::with_capacity(iters);
    let mut infer_ms = Vec::with_capacity(iters);
    let mut total_ms = Vec::with_capacity(iters);
    for i in 0..(iters + warmup) {
        let t0 = Instant::now();
        let spectra: Vec<_> = window
            .iter()
            .map(|ch| mel_spectrogram_with(ch, &params, &bank))
            .collect::<Result<_, _>>()?;
        let stack = fuse(&spectra)?;
        let x = Tensor4::new(
            1,
            stack.channels(),
            stack.n_mels(),
            stack.n_frames(),
            stack.values().to_vec(),
        )?;
        let t1 = Instant::now();
        let logits = model.forward_eval(&x)?;
        let t2 = Instant::now();
        assert_eq!(logits.len(), 2);
        if i >= warmup {
            feat_ms.push((t1 - t0).as_secs_f64() * 1000.0);
            infer_ms.push((t2 - t1).as_secs_f64() * 1000.0);
            total_ms.push((t2 - t0).as_secs_f64() * 1000.0);
        }
    }
    Ok(LatencyReport {
        arch: String::new(),
        channels,
        iters,
        featurize: stage(&feat_ms),
        infer: stage(&infer_ms),
        total: stage(&total_ms),
    })
}

/// Run the command.
pub fn run(args: &BenchArgs, cfg: &RunConfig) -> anyhow::Result<()> {
    let model = match &args.checkpoint {
        Some(path) => tensor_io::load_checkpoint(path)?,
        None => {
            let arch = crate::commands::train::arch_config(&cfg.model.arch, args.channels)?;
            SEResNet18::<f32>::new(&arch, args.seed).context("building model")?
        }
    };
    let arch_name = match &args.checkpoint {
        Some(_) => format!("checkpoint:{}", model.config().widths[0]),
        None => cfg.model.arch.clone(),
    };
    let mut report = measure(&model, cfg, args.iters, args.seed)?;
    report.arch = arch_name;

    let json = serde_json::to_string_pretty(&report)?;
    println!("{json}");
    if let Some(path) = &args.out {
        session::save_json(path, &report)?;
    }
    Ok(())
}
