//! Layered run configuration.
//!
//! Precedence, lowest to highest: built-in defaults, a TOML file passed
//! with `--config`, `PSENT_*` environment variables, then command-line
//! flags (applied by each command after [`RunConfig::resolve`]).
//!
//! Environment variables name a section and key, e.g.
//! `PSENT_TRAIN_EPOCHS=12` or `PSENT_MEL_N_MELS=64`.

use psent_core::dsp::{MelParams, WindowSpec};
use psent_core::eval::CvPlan;
use psent_core::geometry::DistanceMode;
use psent_core::signal::SensorKind;
use serde::Deserialize;
use std::path::{Path, PathBuf};

/// Configuration errors.
#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    /// The config file could not be read.
    #[error("{path}: {source}")]
    Io {
        /// File being read.
        path: PathBuf,
        /// Underlying error.
        #[source]
        source: std::io::Error,
    },
    /// The config file is not valid TOML for this schema.
    #[error("{path}: {message}")]
    Toml {
        /// File being parsed.
        path: PathBuf,
        /// Parser diagnostics.
        message: String,
    },
    /// An environment override did not parse.
    #[error("{var}={value}: expected {expected}")]
    Env {
        /// Variable name.
        var: &'static str,
        /// Offending value.
        value: String,
        /// What would have parsed.
        expected: &'static str,
    },
    /// A value failed a domain check.
    #[error("{0}")]
    Invalid(String),
}

/// Dataset assembly settings.
#[derive(Clone, Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    /// Sensors to fuse, in channel order.
    pub sensors: Vec<String>,
    /// Analysis window length, ms.
    pub window_ms: f64,
    /// Step between window starts, ms.
    pub step_ms: f64,
    /// Augment breach windows of training sessions while featurizing.
    pub augment: bool,
    /// Non-breach windows kept per breach window in training sessions.
    pub non_breach_ratio: f64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            sensors: vec!["contact_mic".to_string()],
            window_ms: 100.0,
            step_ms: 25.0,
            augment: false,
            non_breach_ratio: 3.0,
        }
    }
}

/// Mel featurization settings; defaults mirror the core pipeline.
#[derive(Clone, Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MelConfig {
    /// Analysis frame length.
    pub n_fft: usize,
    /// Hop between frames, samples.
    pub hop: usize,
    /// Mel bands.
    pub n_mels: usize,
    /// Lowest band edge, Hz.
    pub f_min: f64,
    /// Highest band edge, Hz.
    pub f_max: f64,
    /// dB floor.
    pub floor_db: f64,
}

impl Default for MelConfig {
    fn default() -> Self {
        let m = MelParams::default();
        Self {
            n_fft: m.n_fft,
            hop: m.hop,
            n_mels: m.n_mels,
            f_min: m.f_min,
            f_max: m.f_max,
            floor_db: m.floor_db,
        }
    }
}

/// Labeling geometry settings.
#[derive(Clone, Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LabelConfig {
    /// Breach interval length appended after the located crossing, ms.
    pub span_ms: f64,
    /// Fraction of a window that must overlap the interval to be breach.
    pub overlap: f64,
    /// Tip-to-mesh distance mode: `vertex` or `surface`.
    pub distance_mode: String,
}

impl Default for LabelConfig {
    fn default() -> Self {
        Self {
            span_ms: 200.0,
            overlap: 0.5,
            distance_mode: "vertex".to_string(),
        }
    }
}

/// Model architecture settings.
#[derive(Clone, Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// `full` or `width_scaled`.
    pub arch: String,
    /// Warm-start checkpoint; empty for fresh initialization.
    pub checkpoint: String,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            arch: "width_scaled".to_string(),
            checkpoint: String::new(),
        }
    }
}

/// Optimization settings.
#[derive(Clone, Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    /// Passes over the training split.
    pub epochs: usize,
    /// Samples per optimizer step.
    pub batch_size: usize,
    /// Adam step size.
    pub learning_rate: f64,
    /// Focal-loss focusing exponent.
    pub gamma: f64,
    /// Master seed for splits, initialization, and shuffles.
    pub seed: u64,
}

impl Default for TrainSection {
    fn default() -> Self {
        Self {
            epochs: 6,
            batch_size: 16,
            learning_rate: 1e-3,
            gamma: 2.0,
            seed: 7,
        }
    }
}

/// Cross-validation settings.
#[derive(Clone, Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CvConfig {
    /// Fraction of sessions held out for the test set.
    pub test_fraction: f64,
    /// Folds over the remaining sessions.
    pub n_folds: usize,
    /// Training runs per configuration.
    pub n_runs: usize,
}

impl Default for CvConfig {
    fn default() -> Self {
        let p = CvPlan::default();
        Self {
            test_fraction: p.test_fraction,
            n_folds: p.n_folds,
            n_runs: p.n_runs,
        }
    }
}

/// The full layered configuration.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Dataset assembly.
    pub dataset: DatasetConfig,
    /// Mel featurization.
    pub mel: MelConfig,
    /// Labeling geometry.
    pub label: LabelConfig,
    /// Model architecture.
    pub model: ModelConfig,
    /// Optimization.
    pub train: TrainSection,
    /// Cross-validation.
    pub cv: CvConfig,
}

fn env_override<T: std::str::FromStr>(
    var: &'static str,
    expected: &'static str,
    slot: &mut T,
) -> Result<(), ConfigError> {
    if let Ok(value) = std::env::var(var) {
        *slot = value.parse().map_err(|_| ConfigError::Env {
            var,
            value,
            expected,
        })?;
    }
    Ok(())
}

impl RunConfig {
    /// Defaults, then the TOML file when given, then `PSENT_*` overrides.
    pub fn resolve(path: Option<&Path>) -> Result<Self, ConfigError> {
        let mut cfg = match path {
            None => RunConfig::default(),
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| ConfigError::Io {
                    path: p.to_path_buf(),
                    source: e,
                })?;
                toml::from_str(&text).map_err(|e| ConfigError::Toml {
                    path: p.to_path_buf(),
                    message: e.to_string(),
                })?
            }
        };
        cfg.apply_env()?;
        Ok(cfg)
    }

    fn apply_env(&mut self) -> Result<(), ConfigError> {
        if let Ok(value) = std::env::var("PSENT_DATASET_SENSORS") {
            self.dataset.sensors = value.split(',').map(|s| s.trim().to_string()).collect();
        }
        env_override(
            "PSENT_DATASET_WINDOW_MS",
            "a number",
            &mut self.dataset.window_ms,
        )?;
        env_override("PSENT_DATASET_STEP_MS", "a number", &mut self.dataset.step_ms)?;
        env_override(
            "PSENT_DATASET_AUGMENT",
            "true or false",
            &mut self.dataset.augment,
        )?;
        env_override(
            "PSENT_DATASET_NON_BREACH_RATIO",
            "a number",
            &mut self.dataset.non_breach_ratio,
        )?;
        env_override("PSENT_MEL_N_FFT", "an integer", &mut self.mel.n_fft)?;
        env_override("PSENT_MEL_HOP", "an integer", &mut self.mel.hop)?;
        env_override("PSENT_MEL_N_MELS", "an integer", &mut self.mel.n_mels)?;
        env_override("PSENT_MEL_F_MIN", "a number", &mut self.mel.f_min)?;
        env_override("PSENT_MEL_F_MAX", "a number", &mut self.mel.f_max)?;
        env_override("PSENT_MEL_FLOOR_DB", "a number", &mut self.mel.floor_db)?;
        env_override("PSENT_LABEL_SPAN_MS", "a number", &mut self.label.span_ms)?;
        env_override("PSENT_LABEL_OVERLAP", "a number", &mut self.label.overlap)?;
        env_override(
            "PSENT_LABEL_DISTANCE_MODE",
            "vertex or surface",
            &mut self.label.distance_mode,
        )?;
        env_override("PSENT_MODEL_ARCH", "full or width_scaled", &mut self.model.arch)?;
        env_override("PSENT_MODEL_CHECKPOINT", "a path", &mut self.model.checkpoint)?;
        env_override("PSENT_TRAIN_EPOCHS", "an integer", &mut self.train.epochs)?;
        env_override(
            "PSENT_TRAIN_BATCH_SIZE",
            "an integer",
            &mut self.train.batch_size,
        )?;
        env_override(
            "PSENT_TRAIN_LEARNING_RATE",
            "a number",
            &mut self.train.learning_rate,
        )?;
        env_override("PSENT_TRAIN_GAMMA", "a number", &mut self.train.gamma)?;
        env_override("PSENT_TRAIN_SEED", "an integer", &mut self.train.seed)?;
        env_override(
            "PSENT_CV_TEST_FRACTION",
            "a number",
            &mut self.cv.test_fraction,
        )?;
        env_override("PSENT_CV_N_FOLDS", "an integer", &mut self.cv.n_folds)?;
        env_override("PSENT_CV_N_RUNS", "an integer", &mut self.cv.n_runs)?;
        Ok(())
    }

    /// Parsed sensor kinds, in configured order.
    pub fn sensor_kinds(&self) -> Result<Vec<SensorKind>, ConfigError> {
        if self.dataset.sensors.is_empty() {
            return Err(ConfigError::Invalid("sensor set must be nonempty".into()));
        }
        self.dataset
            .sensors
            .iter()
            .map(|s| {
                SensorKind::parse(s)
                    .map_err(|_| ConfigError::Invalid(format!("unknown sensor {s}")))
            })
            .collect()
    }

    /// Window slicing spec.
    pub fn window_spec(&self) -> WindowSpec {
        WindowSpec {
            length_ms: self.dataset.window_ms,
            step_ms: self.dataset.step_ms,
        }
    }

    /// Mel parameters at `sample_rate_hz`.
    pub fn mel_params(&self, sample_rate_hz: f64) -> MelParams {
        MelParams {
            sample_rate_hz,
            n_fft: self.mel.n_fft,
            hop: self.mel.hop,
            n_mels: self.mel.n_mels,
            f_min: self.mel.f_min,
            f_max: self.mel.f_max,
            floor_db: self.mel.floor_db,
        }
    }

    /// Labeling distance mode.
    pub fn distance_mode(&self) -> Result<DistanceMode, ConfigError> {
        match self.label.distance_mode.as_str() {
            "vertex" => Ok(DistanceMode::Vertex),
            "surface" => Ok(DistanceMode::Surface),
            other => Err(ConfigError::Invalid(format!(
                "unknown distance mode {other} (expected vertex or surface)"
            ))),
        }
    }

    /// Cross-validation plan seeded by the train seed.
    pub fn cv_plan(&self) -> CvPlan {
        CvPlan {
            test_fraction: self.cv.test_fraction,
            n_folds: self.cv.n_folds,
            n_runs: self.cv.n_runs,
            seed: self.train.seed,
        }
    }
}
