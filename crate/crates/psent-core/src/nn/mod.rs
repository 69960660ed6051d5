//! Breach classifier: an SE-ResNet-18 with explicit forward and backward
//! passes, focal loss, Adam, and a seeded training loop. Everything is
//! generic over the scalar so production runs at f32 while gradient
//! verification runs at f64.

pub mod adam;
pub mod gradcheck;
pub mod layers;
pub mod loss;
pub mod model;
pub mod tensor;
pub mod train;

use core::fmt;

pub use adam::{AdamConfig, AdamState};
pub use gradcheck::{check_layer_gradients, gradient_check, GradCheckReport, LayerCheck, FD_STEP};
pub use layers::{BatchNorm, Conv2d, Dense, SeBlock, BN_EPS, BN_MOMENTUM};
pub use loss::{focal_loss, softmax2, FocalLossParams, LOG_EPS};
pub use model::{ArchConfig, SEResNet18};
pub use tensor::{Param, Tensor4, TensorRole};
pub use train::{evaluate, predict_row, train, Dataset, EpochStats, EvalMetrics, TrainConfig, TrainOutcome};

/// Scalar element type the network runs on.
pub trait Scalar: num_traits::Float + core::fmt::Debug + Send + Sync + 'static {}
impl Scalar for f32 {}
impl Scalar for f64 {}

/// Convert an f64 constant to the working scalar.
#[inline]
pub(crate) fn scalar<T: Scalar>(x: f64) -> T {
    T::from(x).expect("f64 constant representable in the working scalar")
}

/// Classifier errors.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum NnError {
    /// A tensor shape violated the stated expectation.
    BadShape {
        /// Which expectation.
        context: &'static str,
    },
    /// Channel counts disagree.
    ChannelMismatch {
        /// Channels required.
        expected: usize,
        /// Channels provided.
        got: usize,
    },
    /// A non-finite value appeared.
    NonFinite {
        /// Where it appeared.
        at: &'static str,
    },
    /// A label was outside {0, 1}.
    LabelOutOfRange {
        /// Sample index.
        index: usize,
        /// The offending label.
        label: usize,
    },
    /// Paired inputs differ in length.
    LengthMismatch {
        /// Left length.
        left: usize,
        /// Right length.
        right: usize,
    },
    /// An empty dataset or batch.
    EmptyDataset,
    /// A class has no training samples, so its weight is undefined.
    MissingClass {
        /// The empty class.
        class: usize,
    },
    /// Training produced a non-finite loss.
    Diverged {
        /// Epoch at which the loss left the finite range.
        epoch: usize,
    },
    /// Parameter failed validation; the message says which.
    InvalidParam(&'static str),
}

impl fmt::Display for NnError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NnError::BadShape { context } => write!(f, "shape mismatch: {context}"),
            NnError::ChannelMismatch { expected, got } => {
                write!(f, "expected {expected} channels, got {got}")
            }
            NnError::NonFinite { at } => write!(f, "non-finite value in {at}"),
            NnError::LabelOutOfRange { index, label } => {
                write!(f, "label {label} at sample {index} is outside {{0, 1}}")
            }
            NnError::LengthMismatch { left, right } => {
                write!(f, "paired inputs differ in length: {left} vs {right}")
            }
            NnError::EmptyDataset => write!(f, "empty dataset"),
            NnError::MissingClass { class } => {
                write!(f, "class {class} has no training samples")
            }
            NnError::Diverged { epoch } => {
                write!(f, "training diverged at epoch {epoch}: non-finite loss")
            }
            NnError::InvalidParam(msg) => write!(f, "invalid parameter: {msg}"),
        }
    }
}

impl core::error::Error for NnError {}
