//! Dense reverse-mode differentiation, just large enough for coordinate MLPs.

mod adam;
mod graph;
mod tensor;

pub use adam::AdamState;
pub use graph::{Gradients, Graph, NodeId};
pub use tensor::Tensor;
