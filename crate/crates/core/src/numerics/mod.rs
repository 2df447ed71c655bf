//! Dense `f64` tensors with a small reverse-mode differentiation tape.
//!
//! The op set is exactly what the attention classifier and the
//! gradient-based attribution methods need: `matmul`, `add`, `scale`,
//! `relu`, `softmax`, `embedding_lookup`, `mean`/`sum`, `cross_entropy`
//! and `pick`. Relu routing is configurable through [`BackwardPolicy`] so
//! that Guided Backpropagation and DeepLift reuse the same sweep.

mod fd;
mod tape;
mod tensor;

pub use fd::{finite_difference_check, relative_error, FdOptions, FdReport, RELATIVE_ERROR_FLOOR};
pub use tape::{softmax, Axis, BackwardPolicy, Gradients, NodeId, ReluRule, Tape};
pub use tensor::Tensor;

pub(crate) use tape::log_sum_exp;
pub(crate) use tensor::matmul_raw;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NumericsError {
    #[error("dimension mismatch in {op}: {left:?} vs {right:?}")]
    Shape {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("expected rank {expected}, got shape {shape:?}")]
    Rank { expected: usize, shape: Vec<usize> },
    #[error("data length {len} does not match shape {shape:?}")]
    DataLength { shape: Vec<usize>, len: usize },
    #[error("index {index} out of bounds ({bound})")]
    Index { index: usize, bound: usize },
    #[error("{op} over an empty axis")]
    Empty { op: &'static str },
    #[error("non-finite value produced by {op}")]
    NonFinite { op: &'static str },
    #[error("gradient requested for non-scalar output of shape {shape:?}")]
    NotScalar { shape: Vec<usize> },
    #[error("rescale policy needs baseline activations")]
    MissingBaseline,
    #[error("baseline tape does not mirror the evaluated graph")]
    BaselineMismatch,
    #[error("{0}")]
    InvalidArgument(&'static str),
}
