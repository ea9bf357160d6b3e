use std::fs;
use std::path::{Path, PathBuf};

use memgat::adversarial::{AdversarialObjective, LossWeights};
use memgat::conditions::ConditionKind;
use memgat::tensor::AdamConfig;
use memgat::transformer::ModelConfig;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    #[value(name = "car-stage1")]
    CarStage1,
    #[value(name = "car-stage2")]
    CarStage2,
    #[value(name = "car-stage3")]
    CarStage3,
    Style,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataPaths {
    /// JSONL of dialogue turns, or a `.tsv` style corpus.
    pub train: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub validation: Option<PathBuf>,
    /// One token per line. Built from the training data when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vocabulary: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSettings {
    pub d_model: usize,
    pub num_heads: usize,
    pub num_layers: usize,
    pub max_seq_len: usize,
    pub max_memory_len: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub feedforward_dim: Option<usize>,
    pub shared_memory_embedding: bool,
}

impl Default for ModelSettings {
    fn default() -> Self {
        Self {
            d_model: 32,
            num_heads: 4,
            num_layers: 2,
            max_seq_len: 32,
            max_memory_len: 48,
            feedforward_dim: None,
            shared_memory_embedding: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WeightSettings {
    pub standard: f64,
    pub adversarial: f64,
    /// One weight per entry of `conditions`; all 1 when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub conditions: Option<Vec<f64>>,
}

impl Default for WeightSettings {
    fn default() -> Self {
        Self {
            standard: 1.0,
            adversarial: 0.0,
            conditions: None,
        }
    }
}

fn default_epochs() -> usize {
    200
}

fn default_batch_size() -> usize {
    8
}

/// Everything one training run needs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub task: Task,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    pub output_dir: PathBuf,
    /// Empties the memory of every turn.
    #[serde(default)]
    pub ablate_memory: bool,
    #[serde(default)]
    pub objective: AdversarialObjective,
    #[serde(default)]
    pub conditions: Vec<ConditionKind>,
    /// Slot-name file; the CAR lexicon when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lexicon: Option<PathBuf>,
    pub data: DataPaths,
    #[serde(default)]
    pub model: ModelSettings,
    #[serde(default)]
    pub optimizer: AdamConfig,
    #[serde(default)]
    pub weights: WeightSettings,
}

fn resolve(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> CliResult<Self> {
        toml::from_str(text).map_err(|e| CliError::config("toml", e.message().to_string()))
    }

    /// Reads and validates a config file. Relative paths are taken from the
    /// file's directory.
    pub fn load(path: impl AsRef<Path>) -> CliResult<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        resolve(base, &mut cfg.output_dir);
        resolve(base, &mut cfg.data.train);
        for p in [&mut cfg.data.validation, &mut cfg.data.vocabulary, &mut cfg.lexicon]
            .into_iter()
            .flatten()
        {
            resolve(base, p);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> CliResult<()> {
        if self.epochs == 0 {
            return Err(CliError::config("epochs", "must be positive"));
        }
        if self.batch_size == 0 {
            return Err(CliError::config("batch_size", "must be positive"));
        }
        let paths = [
            ("data.train", Some(&self.data.train)),
            ("data.validation", self.data.validation.as_ref()),
            ("data.vocabulary", self.data.vocabulary.as_ref()),
            ("lexicon", self.lexicon.as_ref()),
        ];
        for (field, p) in paths {
            if let Some(p) = p {
                if !p.exists() {
                    return Err(CliError::config(field, format!("{} does not exist", p.display())));
                }
            }
        }
        let weight = |field: String, w: f64| {
            if w.is_finite() && w >= 0.0 {
                Ok(())
            } else {
                Err(CliError::config(field, format!("weight must be finite and non-negative, got {w}")))
            }
        };
        weight("weights.standard".into(), self.weights.standard)?;
        weight("weights.adversarial".into(), self.weights.adversarial)?;
        if let Some(ws) = &self.weights.conditions {
            if ws.len() != self.conditions.len() {
                return Err(CliError::config(
                    "weights.conditions",
                    format!("{} weights for {} conditions", ws.len(), self.conditions.len()),
                ));
            }
            for (i, &w) in ws.iter().enumerate() {
                weight(format!("weights.conditions[{i}]"), w)?;
            }
        }
        let o = &self.optimizer;
        if !(o.lr > 0.0 && o.lr.is_finite()) {
            return Err(CliError::config("optimizer.lr", "must be positive"));
        }
        Ok(())
    }

    pub fn loss_weights(&self) -> LossWeights {
        LossWeights {
            standard: self.weights.standard,
            conditions: self
                .weights
                .conditions
                .clone()
                .unwrap_or_else(|| vec![1.0; self.conditions.len()]),
            adversarial: self.weights.adversarial,
        }
    }

    pub fn model_config(&self, vocab_size: usize) -> ModelConfig {
        let m = &self.model;
        let mut c = ModelConfig::tiny(vocab_size, m.d_model, m.num_heads, m.num_layers);
        c.max_seq_len = m.max_seq_len;
        c.max_memory_len = m.max_memory_len;
        c.feedforward_dim = m.feedforward_dim;
        c.shared_memory_embedding = m.shared_memory_embedding;
        c
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}
