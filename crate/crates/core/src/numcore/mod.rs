//! Dense tensors, value-level kernels and a reverse-mode autodiff graph.

pub mod gradcheck;
pub mod graph;
pub mod kernels;
mod tensor;

pub use graph::{Graph, NodeId};
pub use kernels::{argmax, kl_divergence, soft_cross_entropy, softmax};
pub use tensor::Tensor;
