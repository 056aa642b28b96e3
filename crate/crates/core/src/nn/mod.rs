//! Minimal differentiable network toolkit sized for small Q-networks.
//!
//! Networks are fixed stacks of dense layers with at most one gated recurrent
//! layer. Gradients are computed by explicit backpropagation (through time for
//! the recurrent layer); there is no general autodiff graph.

mod checkpoint;
mod init;
mod kernels;
mod layers;
mod network;
mod optim;
mod params;
mod tensor;

pub use checkpoint::{read_checkpoint, write_checkpoint, CHECKPOINT_MAGIC};
pub(crate) use init::random_matrix;
pub use init::{init_network, orthogonal_init};
pub use layers::{
    dense_backward, dense_backward_params, dense_forward, dense_forward_cached, recurrent_backward,
    recurrent_step, recurrent_step_cached, Activation, DenseCache, LayerKind, LayerSpec,
    RecurrentCache,
};
pub use network::{
    compute_gradients, network_backward, network_forward, network_forward_traced, network_step,
    Architecture, DifferentiableLoss, SequenceTrace,
};
pub use optim::{adam_update, clip_global_norm, AdamConfig, OptimizerState, DEFAULT_MAX_GRAD_NORM};
pub(crate) use params::check_layer_shape;
pub use params::{LayerParams, ParameterSet};
pub use tensor::Tensor;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NnError {
    #[error("invalid tensor shape {0:?}")]
    InvalidShape(Vec<usize>),
    #[error("tensor data length {actual} does not match shape product {expected}")]
    DataLength { expected: usize, actual: usize },
    #[error("dimension mismatch in layer {layer_id}: expected {expected}, got {actual}")]
    DimensionMismatch {
        layer_id: usize,
        expected: usize,
        actual: usize,
    },
    #[error("layer {layer_id} is missing tensor `{name}`")]
    MissingTensor { layer_id: usize, name: String },
    #[error("shape mismatch in layer {layer_id} tensor `{name}`")]
    ShapeMismatch { layer_id: usize, name: String },
    #[error("invalid architecture: {0}")]
    InvalidArchitecture(String),
    #[error("empty input sequence")]
    EmptySequence,
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("checkpoint parse error on line {line}: {msg}")]
    Checkpoint { line: usize, msg: String },
    #[error("io error: {0}")]
    Io(String),
}
