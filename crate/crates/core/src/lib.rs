//! Pruned contrastive pre-training and boundary-aware adversarial domain
//! adaptation for bi-imbalanced classification, with a synthetic benchmark
//! harness.
//!
//! Layers:
//! - [`tensor`], [`nn`]: dense tensors, layer stack, forward/backward, SGD.
//! - [`pruning`]: magnitude masks and the prune-update-recombine cycle.
//! - [`contrastive`]: pair-based and domain-based contrastive losses.
//! - [`models`]: extractor and heads, classification and adversarial losses,
//!   checkpoints.
//! - [`pipeline`]: pre-training and adaptation loops.
//! - [`data`], [`eval`]: scenarios, synthetic domains, metrics, ablations,
//!   sweeps.

pub mod cli;
pub mod config;
pub mod container;
pub mod contrastive;
pub mod data;
pub mod error;
pub mod eval;
pub mod io;
pub mod models;
pub mod nn;
pub mod pipeline;
pub mod pruning;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::{ParameterSet, Tensor};
