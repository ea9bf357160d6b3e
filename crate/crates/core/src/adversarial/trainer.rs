use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::{evaluate_standard_loss, gat_train_step, GatModel, StepMetrics};
use crate::data::EncodedTurn;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::transformer::MemoryAugmentedTransformer;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainerConfig {
    pub epochs: usize,
    pub batch_size: usize,
    /// Seeds the per-epoch shuffle.
    pub seed: u64,
    pub shuffle: bool,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            batch_size: 8,
            seed: 0,
            shuffle: true,
        }
    }
}

/// One line of the metrics log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub steps: usize,
    pub standard_loss: f64,
    pub condition_losses: Vec<f64>,
    pub adversarial_loss: f64,
    pub discriminator_loss: f64,
    pub discriminator_accuracy: f64,
    pub validation_loss: Option<f64>,
}

impl EpochRecord {
    fn from_steps(epoch: usize, steps: &[StepMetrics], validation_loss: Option<f64>) -> Self {
        let n = steps.len() as f64;
        let mean = |f: &dyn Fn(&StepMetrics) -> f64| steps.iter().map(f).sum::<f64>() / n;
        let conditions = steps.first().map_or(0, |s| s.condition_losses.len());
        Self {
            epoch,
            steps: steps.len(),
            standard_loss: mean(&|s| s.standard_loss),
            condition_losses: (0..conditions).map(|i| mean(&|s| s.condition_losses[i])).collect(),
            adversarial_loss: mean(&|s| s.adversarial_loss),
            discriminator_loss: mean(&|s| s.discriminator_loss),
            discriminator_accuracy: mean(&|s| s.discriminator_accuracy),
            validation_loss,
        }
    }

    /// Validation loss when available, else the training standard loss.
    pub fn selection_loss(&self) -> f64 {
        self.validation_loss.unwrap_or(self.standard_loss)
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome<T: Scalar> {
    pub records: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_generator: MemoryAugmentedTransformer<T>,
}

/// Runs `config.epochs` epochs of [`gat_train_step`] over shuffled batches.
/// `on_epoch` sees every record as soon as it is produced. The generator
/// with the lowest selection loss is kept; ties go to the earlier epoch.
pub fn train<T, F>(
    model: &mut GatModel<T>,
    train_set: &[EncodedTurn],
    validation: &[EncodedTurn],
    config: &TrainerConfig,
    mut on_epoch: F,
) -> Result<TrainOutcome<T>>
where
    T: Scalar,
    F: FnMut(&EpochRecord) -> Result<()>,
{
    if train_set.is_empty() {
        return Err(Error::DegenerateBatch("empty training set".into()));
    }
    if config.batch_size == 0 || config.epochs == 0 {
        return Err(Error::Config("epochs and batch_size must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut records = Vec::with_capacity(config.epochs);
    let mut best: Option<(f64, usize, MemoryAugmentedTransformer<T>)> = None;
    let mut batch = Vec::with_capacity(config.batch_size);
    for epoch in 1..=config.epochs {
        if config.shuffle {
            order.shuffle(&mut rng);
        }
        let mut steps = Vec::new();
        for chunk in order.chunks(config.batch_size) {
            batch.clear();
            batch.extend(chunk.iter().map(|&i| train_set[i].clone()));
            steps.push(gat_train_step(model, &batch)?);
        }
        let validation_loss = if validation.is_empty() {
            None
        } else {
            Some(evaluate_standard_loss(&model.generator, validation)?)
        };
        let record = EpochRecord::from_steps(epoch, &steps, validation_loss);
        on_epoch(&record)?;
        let loss = record.selection_loss();
        if best.as_ref().map_or(true, |(b, _, _)| loss < *b) {
            best = Some((loss, epoch, model.generator.clone()));
        }
        records.push(record);
    }
    let (_, best_epoch, best_generator) = best.expect("at least one epoch ran");
    Ok(TrainOutcome {
        records,
        best_epoch,
        best_generator,
    })
}

/// Appends records as JSON lines.
pub fn write_metrics_line<W: Write>(out: &mut W, record: &EpochRecord) -> Result<()> {
    let line = serde_json::to_string(record)?;
    writeln!(out, "{line}").map_err(|e| Error::io("metrics log", e))
}
