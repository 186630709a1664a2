//! Dense tensors, a recording graph for reverse-mode gradients, the layer
//! primitives the autoencoders need, optimizers and checkpoint I/O.

pub mod checkpoint;
pub mod graph;
pub mod ops;
pub mod optim;
pub mod params;
pub mod tensor;

pub use graph::{Gradients, Graph, NodeId, Op};
pub use optim::{OptimizerKind, OptimizerState};
pub use params::ParamStore;
pub use tensor::Tensor;
