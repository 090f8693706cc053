//! Desk-scale neural inference engine optimized for CPU decoding:
//! quantized integer matrix products, computation-graph memoization,
//! runtime kernel auto-tuning, averaging-attention decoding, lexical
//! shortlists, word-budget batching and a cost-effectiveness benchmark
//! driver.

pub mod autotune;
pub mod bench;
pub mod decode;
pub mod error;
pub mod graph;
pub mod model;
pub mod pipeline;
pub mod quant;
pub mod runtime;
pub mod tensor;

pub use error::{Error, Result};
