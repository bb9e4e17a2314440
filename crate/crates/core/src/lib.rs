//! Multimodal meme classification toolkit.
//!
//! Captions are encoded with a bidirectional transformer (classification-token state), images
//! with a densely-connected or residual CNN (global max pooling), the two embeddings are
//! concatenated and fed through one dense layer, dropout and a per-subtask output layer.
//! Training is class-weighted Adam with early stopping on dev macro-F1.

pub mod dataset;
pub mod encoders;
mod error;
pub mod experiments;
pub mod fusion;
pub mod metrics;
pub mod trainer;

pub use error::{Error, Result};
