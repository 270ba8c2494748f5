//! Dense `f64` tensors with tape-based reverse-mode differentiation, Adam, and
//! parameter checkpoints.

mod checkpoint;
mod graph;
mod optim;
mod tensor;

pub use checkpoint::{ParamRecord, ParamSet};
pub use graph::{Elementwise, Graph, Var, LAYER_NORM_EPS};
pub use optim::Adam;
pub use tensor::{concat_cols, Tensor};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TensorError {
    #[error("dimension error: {0}")]
    Shape(String),
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("contract violated: {0}")]
    Contract(String),
}
