//! Sleep-stage classification from polysomnography recordings.
//!
//! The pipeline runs: per-channel filtering at the native rate, rational
//! upsampling to 125 Hz, QRS-locked removal of cardiac interference,
//! normalization with training-set statistics, and 30 s epoching into
//! 3750×5 tensors. A 1D convolutional network is trained on those tensors
//! with weighted cross-entropy and Adam, hyperparameters are searched with a
//! tree-structured Parzen estimator, and the best models vote as an ensemble.

// `!(x > 0.0)` style guards deliberately reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod evaluate;
pub mod hpo;
pub mod neuralnet;
pub mod preprocess;
pub mod records;
pub mod synthetic;
pub mod training;

pub use error::{Error, ErrorKind, Result};
pub use records::{
    Channel, ChannelKind, EpochTensor, NormalizationStats, PsgRecord, StageLabel, EPOCH_SAMPLES,
    N_STAGES,
};
pub use neuralnet::{build_network, AdamState, Batch, ConvNet, Gradients, Mode, ModelConfig};
pub use training::{ClassWeights, EpochSet, TrainHistory, TrainRunConfig};
