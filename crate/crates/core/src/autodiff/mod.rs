//! Dense real tensors, a reverse-mode autodiff tape and the Adam optimizer.

mod adam;
mod graph;
mod tensor;

pub use adam::{adam_step, Adam, AdamState, DEFAULT_BETA1, DEFAULT_BETA2, DEFAULT_EPSILON};
pub use graph::{Gradients, Graph, NodeId, LOG_CLAMP};
pub use tensor::Tensor;
