//! Small reverse-mode differentiation engine over 64-bit tensors: dilated
//! 1-D convolution, max pooling, dense layers, ReLU/sigmoid, MSE and binary
//! cross-entropy, and the Adam optimizer.

mod adam;
mod graph;
pub mod ops;
mod params;
mod tensor;

pub use adam::{AdamConfig, AdamState};
pub use graph::{Gradients, Graph, NodeId};
pub use ops::{bce_loss, conv1d, dense, maxpool1d, mse_loss, relu, sigmoid, sigmoid_scalar, BCE_EPS};
pub use params::{ParamId, ParamStore, Parameter};
pub use tensor::Tensor;
