use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Architecture hyper-parameters of a [`MemoryAugmentedTransformer`](super::MemoryAugmentedTransformer).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub vocab_size: usize,
    #[serde(default = "defaults::d_model")]
    pub d_model: usize,
    #[serde(default = "defaults::num_heads")]
    pub num_heads: usize,
    #[serde(default = "defaults::num_layers")]
    pub num_layers: usize,
    #[serde(default = "defaults::max_len")]
    pub max_seq_len: usize,
    #[serde(default = "defaults::max_len")]
    pub max_memory_len: usize,
    /// Defaults to `4 * d_model` when absent.
    #[serde(default)]
    pub feedforward_dim: Option<usize>,
    #[serde(default)]
    pub pad_id: usize,
    #[serde(default = "defaults::bos")]
    pub bos_id: usize,
    #[serde(default = "defaults::eos")]
    pub eos_id: usize,
    /// Memory tokens share the input embedding table when true.
    #[serde(default = "defaults::yes")]
    pub shared_memory_embedding: bool,
    /// Builds the memory-attention sublayers. A model without them is the
    /// reference for the empty-memory equivalence property.
    #[serde(default = "defaults::yes")]
    pub memory_branch: bool,
    #[serde(default = "defaults::ln_eps")]
    pub layer_norm_eps: f64,
}

mod defaults {
    pub fn d_model() -> usize {
        256
    }
    pub fn num_heads() -> usize {
        8
    }
    pub fn num_layers() -> usize {
        2
    }
    pub fn max_len() -> usize {
        64
    }
    pub fn bos() -> usize {
        1
    }
    pub fn eos() -> usize {
        2
    }
    pub fn yes() -> bool {
        true
    }
    pub fn ln_eps() -> f64 {
        1e-5
    }
}

impl ModelConfig {
    /// Paper-scale defaults (`d_model = 256`, 8 heads) for a vocabulary.
    pub fn new(vocab_size: usize) -> Self {
        Self {
            vocab_size,
            d_model: defaults::d_model(),
            num_heads: defaults::num_heads(),
            num_layers: defaults::num_layers(),
            max_seq_len: defaults::max_len(),
            max_memory_len: defaults::max_len(),
            feedforward_dim: None,
            pad_id: 0,
            bos_id: defaults::bos(),
            eos_id: defaults::eos(),
            shared_memory_embedding: true,
            memory_branch: true,
            layer_norm_eps: defaults::ln_eps(),
        }
    }

    /// Small model for tests and desk-scale experiments.
    pub fn tiny(vocab_size: usize, d_model: usize, num_heads: usize, num_layers: usize) -> Self {
        Self {
            d_model,
            num_heads,
            num_layers,
            ..Self::new(vocab_size)
        }
    }

    pub fn ff_dim(&self) -> usize {
        self.feedforward_dim.unwrap_or(4 * self.d_model)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("vocab_size", self.vocab_size),
            ("d_model", self.d_model),
            ("num_heads", self.num_heads),
            ("num_layers", self.num_layers),
            ("max_seq_len", self.max_seq_len),
            ("feedforward_dim", self.ff_dim()),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if self.d_model % self.num_heads != 0 {
            return Err(Error::Config(format!(
                "d_model {} is not divisible by num_heads {}",
                self.d_model, self.num_heads
            )));
        }
        let (p, b, e) = (self.pad_id, self.bos_id, self.eos_id);
        if p == b || p == e || b == e {
            return Err(Error::Config(format!(
                "pad/bos/eos ids must be distinct, got {p}/{b}/{e}"
            )));
        }
        if p.max(b).max(e) >= self.vocab_size {
            return Err(Error::Config(format!(
                "special token ids must be below vocab_size {}",
                self.vocab_size
            )));
        }
        if !(self.layer_norm_eps > 0.0) {
            return Err(Error::Config("layer_norm_eps must be positive".into()));
        }
        Ok(())
    }
}
