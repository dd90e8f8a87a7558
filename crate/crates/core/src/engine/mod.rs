//! Dense tensors, reverse-mode differentiation and the layers, losses and
//! optimizer used by the recognizer and the classification head.

pub mod ctc;
pub mod graph;
pub mod kernels;
pub mod optim;
pub mod recurrent;
pub mod tensor;

pub use graph::{bce, Activation, Graph, NodeId, RecurrentNodes};
pub use optim::{geometric_lr, RmsProp};
pub use recurrent::CellKind;
pub use tensor::Tensor;
