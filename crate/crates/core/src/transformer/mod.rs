//! Encoder-decoder Transformer with a second attention stream over an
//! external memory in every block.
//!
//! Encoder block: `x ← Norm(x + SelfAttn(x) + MemAttn(x, m))`, then a
//! feed-forward sublayer with its own residual and norm. Decoder blocks use
//! masked self-attention, then sum cross-attention over the encoder output
//! with memory attention in one residual, then feed-forward. An empty memory
//! skips the memory term entirely.

mod attention;
mod checkpoint;
mod config;
mod layers;
mod model;

pub use attention::{causal_mask, AttentionOutput, AttentionParams};
pub use checkpoint::{Checkpoint, CHECKPOINT_FORMAT_VERSION};
pub use config::ModelConfig;
pub use model::{argmax, MemoryAugmentedTransformer};

pub(crate) use layers::EncoderBlock;
pub(crate) use model::{embedding_init, sinusoidal_positions};
