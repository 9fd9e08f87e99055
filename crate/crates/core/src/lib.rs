//! All-in-one image restoration around a learnable degradation dictionary.
//!
//! The crate is organised bottom-up:
//!
//! - [`tensor`], [`graph`], [`optim`]: dense tensors, reverse-mode
//!   differentiation and Adam.
//! - [`synth`]: procedural clean images, synthetic degradations and
//!   dataset persistence.
//! - [`ndr`]: the dictionary, degradation query and CP-based injection.
//! - [`model`]: the restoration and degradation networks.
//! - [`train`], [`metrics`], [`checkpoint`]: bidirectional training,
//!   evaluation and state persistence.

pub mod ablation;
pub mod checkpoint;
pub mod config;
pub mod error;
pub mod exec;
pub mod export;
pub mod graph;
pub mod io;
mod kernels;
pub mod layers;
pub mod metrics;
pub mod model;
pub mod ndr;
pub mod optim;
pub mod params;
pub mod synth;
pub mod tensor;
pub mod train;

pub use error::{NdrError, Result};
pub use exec::Execution;
pub use graph::{Graph, Var};
pub use tensor::Tensor;
