//! Reverse-mode automatic differentiation over small dense tensors.
//!
//! Only the operators needed by the embedding network exist. Tensors live in a
//! [`Graph`] and are referred to by [`Tensor`] handles.

mod graph;
mod optim;
mod scalar;

pub use graph::{Graph, Tensor};
pub use optim::{adam_step, AdamConfig, AdamState};
pub use scalar::Scalar;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TensorError {
    #[error("shape mismatch in {op}: {detail}")]
    ShapeMismatch { op: &'static str, detail: String },
    #[error("{0} needs at least one input")]
    EmptyInput(&'static str),
    #[error("backward needs a scalar loss, got shape {0:?}")]
    NonScalarBackward(Vec<usize>),
    #[error("data length {len} does not match shape {shape:?}")]
    DataLength { shape: Vec<usize>, len: usize },
}
