//! Dense linear algebra, activations, and reverse-mode differentiation.

mod graph;
mod tensor;

pub use graph::{Gradients, Graph, NodeId, OpKind};
pub use tensor::{
    argmax, lrel, lrel_scalar, sigmoid, sigmoid_scalar, softmax, tanh, RealMatrix, RealVector,
    LREL_SLOPE,
};
