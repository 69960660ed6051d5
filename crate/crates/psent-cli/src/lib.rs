//! File formats and batch tooling around the breach-detection core.
//!
//! The core crate is deliberately free of IO; everything that touches the
//! filesystem lives here. Each codec module owns one on-disk format:
//!
//! - [`wav`]: multi-channel recordings as one WAV per sensor plus a JSONL
//!   sidecar carrying session identity.
//! - [`mesh_io`]: triangle meshes as ASCII PLY.
//! - [`traj_io`]: tracked trajectories as CSV and rigid transforms as JSON.
//! - [`tensor_io`]: fused spectrogram tensors and model checkpoints in
//!   small binary containers.
//! - [`volume_io`]: HU voxel volumes for density stratification.
//!
//! [`config`] resolves the layered run configuration (defaults, TOML file,
//! `PSENT_` environment variables, command-line flags), [`session`] names
//! the session directory layout, [`dataset`] assembles training tensors
//! from featurized windows, and [`commands`] implements the subcommands of
//! the `psent` binary.

pub mod commands;
pub mod config;
pub mod dataset;
pub mod mesh_io;
pub mod session;
pub mod tensor_io;
pub mod traj_io;
pub mod volume_io;
pub mod wav;

use std::path::PathBuf;

/// Errors from the on-disk codecs.
#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    /// Filesystem failure, annotated with the path involved.
    #[error("{path}: {source}")]
    Io {
        /// File or directory being accessed.
        path: PathBuf,
        /// Underlying error.
        #[source]
        source: std::io::Error,
    },
    /// WAV encode/decode failure.
    #[error("{path}: {source}")]
    Wav {
        /// WAV file being accessed.
        path: PathBuf,
        /// Underlying error.
        #[source]
        source: hound::Error,
    },
    /// JSON encode/decode failure.
    #[error("{path}: {source}")]
    Json {
        /// JSON file being accessed.
        path: PathBuf,
        /// Underlying error.
        #[source]
        source: serde_json::Error,
    },
    /// A text format broke its grammar.
    #[error("{path}:{line}: {message}")]
    Parse {
        /// File being parsed.
        path: PathBuf,
        /// One-based line number.
        line: usize,
        /// What went wrong.
        message: String,
    },
    /// A binary container broke its layout.
    #[error("{path}: {message}")]
    Corrupt {
        /// File being decoded.
        path: PathBuf,
        /// What went wrong.
        message: String,
    },
    /// A required file is absent.
    #[error("missing {role}: {path}")]
    Missing {
        /// What the file would have provided.
        role: &'static str,
        /// Expected location.
        path: PathBuf,
    },
    /// The decoded data failed a core-domain invariant.
    #[error("{path}: {message}")]
    Invalid {
        /// File whose contents were rejected.
        path: PathBuf,
        /// Invariant that failed.
        message: String,
    },
}

impl FormatError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        FormatError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        FormatError::Invalid {
            path: path.into(),
            message: message.into(),
        }
    }

    pub(crate) fn corrupt(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        FormatError::Corrupt {
            path: path.into(),
            message: message.into(),
        }
    }
}
