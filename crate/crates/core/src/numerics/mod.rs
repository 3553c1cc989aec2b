//! Dense tensors, forward kernels and reverse-mode gradients for the
//! fixed convolutional architecture in [`crate::model`].

mod gradcheck;
pub mod ops;
mod tape;
mod tensor;

pub use gradcheck::{gradient_check, relative_error, GradCheckReport, Probe, FD_STEP};
pub use ops::{add, conv1d, cross_entropy, dense, relu, softmax, ConvSpec, PROB_CLIP};
pub use tape::{Gradients, ParamId, ParamKind, ParamSet, ParamTensor, Tape, Var};
pub use tensor::Tensor;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum NumericsError {
    #[error("{op}: {dim} mismatch (expected {expected}, found {found})")]
    ShapeMismatch {
        op: &'static str,
        dim: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("{op}: shapes differ ({left:?} vs {right:?})")]
    ShapesDiffer {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("shape {shape:?} does not hold {len} values")]
    DataLength { shape: Vec<usize>, len: usize },
    #[error("rank {rank} exceeds the supported maximum of 3")]
    Rank { rank: usize },
    #[error("invalid convolution: {0}")]
    InvalidConv(String),
    #[error("target class {index} out of range for {classes} classes")]
    InvalidTarget { index: usize, classes: usize },
    #[error("backward called without a recorded forward pass")]
    NoForward,
    #[error("backward needs a scalar loss, got shape {shape:?}")]
    NotScalar { shape: Vec<usize> },
    #[error("duplicate parameter name {0:?}")]
    DuplicateParam(String),
    #[error("model function is not deterministic: {first} then {second}")]
    NonDeterministic { first: f64, second: f64 },
    #[error("gradient check: {0}")]
    GradCheck(String),
    #[error("non-finite value in {0}")]
    NonFinite(String),
}
