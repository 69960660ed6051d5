//! `psent infer`: run a trained checkpoint over one session's recording
//! and emit per-window breach probabilities.
//!
//! Output is JSONL, one line per analysis window:
//!
//! ```json
//! {"index":42,"start_ms":1050.0,"p_breach":0.93,"label":"breach"}
//! ```

use crate::config::RunConfig;
use crate::tensor_io;
use crate::wav;
use crate::FormatError;
use anyhow::Context;
use psent_core::dsp::{mel_filterbank, mel_spectrogram_with, slice_windows};
use psent_core::label::fuse;
use psent_core::nn::{softmax2, Tensor4};
use psent_core::signal::SensorKind;
use serde::{Deserialize, Serialize};
use std::fs;
use std::io::Write;
use std::path::PathBuf;

/// Parsed `infer` arguments.
pub struct InferArgs {
    /// Checkpoint to run.
    pub checkpoint: PathBuf,
    /// Session directory holding the recording.
    pub session: PathBuf,
    /// Sensors to fuse, channel order; length must match the checkpoint.
    pub sensors: Vec<SensorKind>,
    /// Output JSONL; stdout when absent.
    pub out: Option<PathBuf>,
}

/// One prediction line.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Prediction {
    /// Window index.
    pub index: usize,
    /// Window start, ms.
    pub start_ms: f64,
    /// Softmax probability of the breach class.
    pub p_breach: f64,
    /// Argmax label.
    pub label: String,
}

/// Run the command.
pub fn run(args: &InferArgs, cfg: &RunConfig) -> anyhow::Result<()> {
    let model = tensor_io::load_checkpoint(&args.checkpoint)?;
    let in_channels = model.config().in_channels;
    if in_channels != args.sensors.len() {
        anyhow::bail!(
            "checkpoint expects {in_channels} input channels but {} sensors were requested",
            args.sensors.len()
        );
    }
    let rec = wav::load_recording(&args.session, Some(&args.sensors))
        .with_context(|| format!("session {}", args.session.display()))?;
    let rate = rec.sample_rate_hz;
    let windows = slice_windows(rec.len_samples(), rate, &cfg.window_spec())?;
    if windows.is_empty() {
        anyhow::bail!("recording is shorter than one analysis window");
    }
    let params = cfg.mel_params(rate);
    let bank = mel_filterbank(&params)?;

    let mut predictions = Vec::with_capacity(windows.len());
    let batch = cfg.train.batch_size.max(1);
    for chunk in windows.chunks(batch) {
        let mut values = Vec::new();
        let mut shape = (0usize, 0usize, 0usize);
        for w in chunk {
            let spectra: Vec<_> = rec
                .channels()
                .iter()
                .map(|ch| {
                    mel_spectrogram_with(
                        &ch.samples[w.start_sample..w.start_sample + w.len_samples],
                        &params,
                        &bank,
                    )
                })
                .collect::<Result<_, _>>()?;
            let stack = fuse(&spectra)?;
            shape = (stack.channels(), stack.n_mels(), stack.n_frames());
            values.extend_from_slice(stack.values());
        }
        let x = Tensor4::new(chunk.len(), shape.0, shape.1, shape.2, values)?;
        let logits = model.forward_eval(&x)?;
        for (w, row) in chunk.iter().zip(logits.chunks(2)) {
            let p = softmax2(row[0] as f64, row[1] as f64)[1];
            predictions.push(Prediction {
                index: w.index,
                start_ms: w.start_ms(rate),
                p_breach: p,
                label: if row[1] > row[0] { "breach" } else { "non_breach" }.to_string(),
            });
        }
    }

    let mut buf = Vec::new();
    for p in &predictions {
        serde_json::to_writer(&mut buf, p)?;
        buf.push(b'\n');
    }
    match &args.out {
        Some(path) => fs::File::create(path)
            .and_then(|mut f| f.write_all(&buf))
            .map_err(|e| FormatError::io(path, e))?,
        None => std::io::stdout().write_all(&buf)?,
    }
    log::info!(
        "predicted {} windows, {} breach",
        predictions.len(),
        predictions.iter().filter(|p| p.label == "breach").count()
    );
    Ok(())
}
