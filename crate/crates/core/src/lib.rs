//! Trustworthiness evaluation for emotion classifiers built on frozen
//! multi-layer speech embeddings.
//!
//! The crate trains a small downstream head over layer-averaged embeddings,
//! attacks it with gradient-sign perturbations, and scores it on five axes:
//! performance, privacy, safety, fairness and sustainability.

pub mod attacks;
pub mod dataio;
mod error;
pub mod metrics;
pub mod model;
pub mod profile;
mod rng;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
pub use tensor::{Scalar, Tape, Tensor, TensorError, Var};

/// Engine version recorded in emitted documents.
pub const ENGINE_VERSION: &str = env!("CARGO_PKG_VERSION");
