//! Corner-case memory for driving-scene description: cross-modal embedding
//! storage, weighted similarity retrieval, retrieval-conditioned generation,
//! contrastive alignment training and evaluation.

mod codec;
pub mod error;

pub mod alignment;
pub mod augmentation;
pub mod embedding;
pub mod eval;
pub mod pipeline;
pub mod retrieval;
pub mod store;

pub use error::{Error, Result};
