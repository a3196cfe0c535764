//! From-scratch neural-network engine: the layer set the general framework
//! needs (conv2d, batch norm, average pooling, concatenate, dropout, fully
//! connected, ReLU, softmax), exact reverse-mode gradients, cross-entropy
//! loss, SGD/Adam, a static shape checker, finite-difference gradient
//! verification, and a binary checkpoint format.
//!
//! Compute is f64 throughout. Everything is deterministic: dropout masks
//! come from an explicit seeded stream and no operation reorders floating
//! point reductions between runs.

mod checkpoint;
mod gradcheck;
mod net;
mod ops;
mod optim;
mod shapes;

pub use checkpoint::{load_state, read_checkpoint, save_checkpoint, write_checkpoint, CSIM_MAGIC};
pub use gradcheck::{
    check_network_gradients, check_softmax_gradients, random_layer_check, sweep_layer_checks,
    CheckTarget, GradCheckReport,
};
pub use net::{
    BatchNormLayer, ConvLayer, DenseLayer, Gradients, Layer, Network, BN_EPS, BN_MOMENTUM,
};
pub use ops::{
    avg_pool_forward, batch_norm_forward, concat_flatten, conv2d_forward, dense_forward,
    dropout_forward, dropout_mask, softmax_cross_entropy, Activation, Padding,
};
pub use optim::{adam_defaults, sgd_step, Optimizer, OptimizerKind};
pub use shapes::{check_shapes, conv_output_shape, pool_output_shape, ConvSpec, ShapeTrace};

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("kernel too large: {0}")]
    KernelTooLarge(String),
    #[error("pool too large: {0}")]
    PoolTooLarge(String),
    #[error("empty input list")]
    EmptyInput,
    #[error("batch of {0} is too small for batch statistics (need >= 2)")]
    BatchTooSmall(usize),
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

pub type Result<T> = std::result::Result<T, NnError>;

/// Train mode uses batch statistics and applies dropout; infer mode uses
/// running statistics and is a pure function of the input.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}
