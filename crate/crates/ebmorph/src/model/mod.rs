//! Compact convolutional classifier with deterministic training,
//! checkpointing, and finite-difference gradient verification.
//!
//! The network is fixed: three 3×3 convolution blocks (8, 16, 32 filters),
//! each ReLU-activated and 2×2 max-pooled, then global average pooling and a
//! 32→2 fully connected head. Convolutions run as im2col + GEMM. The whole
//! stack is generic over the scalar type so training runs in f32 while
//! gradient checking runs the identical code in f64.

pub mod checkpoint;
pub mod cnn;
pub mod gradcheck;
pub mod train;

pub use checkpoint::{fnv1a_hex, ArchDescriptor, Checkpoint, CheckpointMeta, EpochStats};
pub use cnn::{cross_entropy, softmax2, CompactCnn, Gradients, Scratch, PARAM_COUNT};
pub use gradcheck::{grad_check, grad_check_mutation_probe, grad_check_sampled, GradCheckReport};
pub use train::{
    class1_probability, predict_dataset, predict_proba, train, train_with_progress, ImageDataset,
    TrainConfig,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("architecture mismatch: {0}")]
    ArchMismatch(String),
    #[error("training set must contain both classes")]
    DegenerateDataset,
    #[error("bad checkpoint: {0}")]
    BadCheckpoint(String),
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

/// Scalar arithmetic the network needs, implemented for `f32` and `f64`.
/// The GEMM hook dispatches to the matching BLAS-style kernel so both
/// precisions share one convolution implementation.
pub trait Real:
    Copy
    + PartialOrd
    + std::fmt::Debug
    + Send
    + Sync
    + 'static
    + std::ops::Add<Output = Self>
    + std::ops::Sub<Output = Self>
    + std::ops::Mul<Output = Self>
    + std::ops::Div<Output = Self>
    + std::ops::Neg<Output = Self>
    + std::ops::AddAssign
    + std::ops::SubAssign
{
    const ZERO: Self;
    const ONE: Self;
    fn from_f64(x: f64) -> Self;
    fn to_f64(self) -> f64;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn maximum(self, other: Self) -> Self;
    /// `C = alpha·A·B + beta·C` for row-major matrices with explicit
    /// (row, column) strides, shapes A: m×k, B: k×n, C: m×n.
    ///
    /// # Safety
    /// Pointers must address buffers valid for the given shapes and strides.
    #[allow(clippy::too_many_arguments)]
    unsafe fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    );
}

impl Real for f32 {
    const ZERO: Self = 0.0;
    const ONE: Self = 1.0;
    fn from_f64(x: f64) -> Self {
        x as f32
    }
    fn to_f64(self) -> f64 {
        self as f64
    }
    fn exp(self) -> Self {
        f32::exp(self)
    }
    fn ln(self) -> Self {
        f32::ln(self)
    }
    fn maximum(self, other: Self) -> Self {
        f32::max(self, other)
    }
    unsafe fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::sgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }
}

impl Real for f64 {
    const ZERO: Self = 0.0;
    const ONE: Self = 1.0;
    fn from_f64(x: f64) -> Self {
        x
    }
    fn to_f64(self) -> f64 {
        self
    }
    fn exp(self) -> Self {
        f64::exp(self)
    }
    fn ln(self) -> Self {
        f64::ln(self)
    }
    fn maximum(self, other: Self) -> Self {
        f64::max(self, other)
    }
    unsafe fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::dgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }
}
