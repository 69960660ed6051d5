//! Core algorithms for detecting cortical-wall breach events during pedicle
//! drilling from multi-sensor vibroacoustic recordings.
//!
//! Everything here is pure computation over owned buffers: mel-spectrogram
//! featurization, rigid registration and breach geometry, an SE-ResNet
//! classifier with explicit forward and backward passes, the statistical
//! evaluation protocol, and a synthetic drilling simulator. File formats,
//! the CLI, and anything touching the filesystem live in the companion
//! `psent-cli` crate.
//!
//! The crate is `no_std`-compatible (`alloc` required): disable the default
//! `std` feature for freestanding builds. The optional `parallel` feature
//! enables rayon-backed batch math and implies `std`.

#![cfg_attr(not(feature = "std"), no_std)]
#![warn(missing_docs)]

extern crate alloc;

pub mod dsp;
pub mod eval;
pub mod fft;
pub mod geometry;
pub mod label;
pub mod nn;
pub mod rng;
pub mod signal;
pub mod simulate;
