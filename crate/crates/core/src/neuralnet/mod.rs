//! A from-scratch 1D convolutional classifier.
//!
//! `n_blocks` × (conv1d "same" → batch norm → ReLU → average pool /2), then
//! global average pooling, dropout, a dense layer with 5 outputs and softmax.
//! Everything is generic over [`Scalar`] so the same code runs in f32 for
//! training and in f64 for finite-difference checks.

mod adam;
mod checkpoint;
mod config;
mod gradcheck;
pub(crate) mod kernels;
mod network;

use std::fmt::Debug;
use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};

pub use adam::{AdamState, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};
pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CHECKPOINT_MAGIC};
pub use config::{ModelConfig, ALLOWED_INITIAL_FILTERS, BLOCKS_RANGE, KERNEL_RANGE, MAX_FILTERS};
pub use gradcheck::{gradient_check, gradient_check_with, layer_checks, GradCheckOptions, GradCheckReport};
pub use network::{build_network, ConvNet, ForwardCache, Gradients, Mode, Param, BN_MOMENTUM};

use crate::error::{Error, Result};
use crate::records::{EpochTensor, EPOCH_SAMPLES};

/// Floating-point element type of a network.
pub trait Scalar:
    Copy
    + Send
    + Sync
    + Debug
    + Default
    + PartialOrd
    + 'static
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + AddAssign
    + SubAssign
    + MulAssign
{
    const ZERO: Self;
    const ONE: Self;
    fn from_f64(v: f64) -> Self;
    fn to_f64(self) -> f64;
    fn is_finite(self) -> bool;
}

impl Scalar for f32 {
    const ZERO: Self = 0.0;
    const ONE: Self = 1.0;
    #[inline]
    fn from_f64(v: f64) -> Self {
        v as f32
    }
    #[inline]
    fn to_f64(self) -> f64 {
        self as f64
    }
    #[inline]
    fn is_finite(self) -> bool {
        f32::is_finite(self)
    }
}

impl Scalar for f64 {
    const ZERO: Self = 0.0;
    const ONE: Self = 1.0;
    #[inline]
    fn from_f64(v: f64) -> Self {
        v
    }
    #[inline]
    fn to_f64(self) -> f64 {
        self
    }
    #[inline]
    fn is_finite(self) -> bool {
        f64::is_finite(self)
    }
}

/// A stack of inputs in channel-major layout, `data[(b * channels + c) * len + t]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch<T: Scalar = f32> {
    pub n: usize,
    pub channels: usize,
    pub len: usize,
    pub data: Vec<T>,
}

impl<T: Scalar> Batch<T> {
    pub fn new(n: usize, channels: usize, len: usize, data: Vec<T>) -> Result<Self> {
        if n == 0 || data.len() != n * channels * len {
            return Err(Error::BadInputShape(format!(
                "batch of {n} x {channels} x {len} cannot hold {} values",
                data.len()
            )));
        }
        Ok(Self { n, channels, len, data })
    }

    pub fn sample(&self, b: usize) -> &[T] {
        let s = self.channels * self.len;
        &self.data[b * s..(b + 1) * s]
    }

    pub fn cast<U: Scalar>(&self) -> Batch<U> {
        Batch {
            n: self.n,
            channels: self.channels,
            len: self.len,
            data: self.data.iter().map(|v| U::from_f64(v.to_f64())).collect(),
        }
    }
}

impl Batch<f32> {
    /// Stacks epoch tensors into a `B × 5 × 3750` batch.
    pub fn from_epochs<'a>(epochs: impl IntoIterator<Item = &'a EpochTensor>) -> Result<Self> {
        let stride = EpochTensor::COLS * EPOCH_SAMPLES;
        let mut data = Vec::new();
        let mut n = 0;
        for e in epochs {
            data.resize(data.len() + stride, 0.0);
            e.write_channel_major(&mut data[n * stride..]);
            n += 1;
        }
        Self::new(n, EpochTensor::COLS, EPOCH_SAMPLES, data)
    }
}
