use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::ModelConfig;
use super::model::MemoryAugmentedTransformer;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{Parameterized, TensorRecord};

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

/// Self-describing model file: configuration, vocabulary and every named
/// parameter tensor in row-major 64-bit form.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    /// `"generator"` or `"discriminator"`.
    pub kind: String,
    pub config: ModelConfig,
    pub vocabulary: Vec<String>,
    pub parameters: Vec<TensorRecord>,
}

impl Checkpoint {
    pub fn capture<T: Scalar, M: Parameterized<T>>(
        kind: &str,
        config: &ModelConfig,
        vocabulary: Vec<String>,
        model: &M,
    ) -> Self {
        Self {
            format_version: CHECKPOINT_FORMAT_VERSION,
            kind: kind.to_string(),
            config: config.clone(),
            vocabulary,
            parameters: model.params().to_records(),
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string(self)?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let ckpt: Checkpoint = serde_json::from_str(&text)
            .map_err(|e| Error::Compatibility(format!("{}: unreadable checkpoint: {e}", path.display())))?;
        ckpt.validate_header()?;
        Ok(ckpt)
    }

    fn validate_header(&self) -> Result<()> {
        if self.format_version != CHECKPOINT_FORMAT_VERSION {
            return Err(Error::Compatibility(format!(
                "checkpoint format {} is not supported (expected {CHECKPOINT_FORMAT_VERSION})",
                self.format_version
            )));
        }
        self.config
            .validate()
            .map_err(|e| Error::Compatibility(format!("invalid config in checkpoint: {e}")))?;
        if !self.vocabulary.is_empty() && self.vocabulary.len() != self.config.vocab_size {
            return Err(Error::Compatibility(format!(
                "vocabulary has {} tokens but config says {}",
                self.vocabulary.len(),
                self.config.vocab_size
            )));
        }
        Ok(())
    }

    /// Rebuilds a generator, validating every tensor shape against the config.
    pub fn to_transformer<T: Scalar>(&self) -> Result<MemoryAugmentedTransformer<T>> {
        if self.kind != "generator" {
            return Err(Error::Compatibility(format!("expected a generator checkpoint, found `{}`", self.kind)));
        }
        let mut model = MemoryAugmentedTransformer::new(self.config.clone(), 0)?;
        model.params_mut().load_records(&self.parameters)?;
        Ok(model)
    }
}
