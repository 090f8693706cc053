//! Transformer encoder/decoder with interchangeable decoder history
//! mechanisms, parameter containers and size arithmetic.

pub mod config;
pub mod decoder;
pub mod encoder;
pub mod params;

pub use config::{DecoderVariant, ModelConfig};
pub use decoder::{aan_parallel, decoder_step, output_logits, DecoderState, KvCache};
pub use encoder::{embed_token, encoder_forward, positional_signal};
pub use params::{param_specs, ModelParams};
