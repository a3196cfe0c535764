//! Device-free context awareness from raw complex WiFi channel state
//! information.
//!
//! The crate covers the full experimental stack:
//!
//! - [`tensor`]: dense f64 row-major tensors, the substrate of everything.
//! - [`csi`]: CSI instances/datasets, stratified folds, and the CSIT
//!   binary dataset format.
//! - [`sigproc`]: the classical preprocessing pipeline (amplitude,
//!   normalization, phase unwrap, sanitization) plus a probe that
//!   demonstrates why unwrapping is unstable near its threshold.
//! - [`nn`]: a from-scratch deep-learning engine (conv2d, batch norm,
//!   average pool bank, dropout, dense, softmax) with exact reverse-mode
//!   gradients, SGD/Adam, finite-difference verification, and the CSIM
//!   checkpoint format.
//! - [`framework`]: declarative architecture specs, the gesture (signfi)
//!   and activity presets, a structural validator, a builder, and
//!   ablation knobs.
//! - [`synth`]: a deterministic multipath CSI generator with clock-skew,
//!   amplitude-scale, noise, and interference impairments, so every claim
//!   is testable at desk scale.
//! - [`harness`]: training loop, k-fold cross-validation, metrics,
//!   ablation runner, and report emission.
//! - [`config`]: the INI-style run configuration grammar used by the CLI.

pub mod config;
pub mod csi;
pub mod framework;
pub mod harness;
pub mod nn;
pub mod rng;
pub mod sigproc;
pub mod synth;
pub mod tensor;

pub use csi::{CsiDataset, CsiInstance, FoldPlan};
pub use framework::ArchitectureSpec;
pub use harness::{RunReport, TrainConfig};
pub use synth::SynthConfig;
pub use tensor::Tensor;
