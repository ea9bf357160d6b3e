//! Generator/discriminator game. Generator text reaches the discriminator as
//! teacher-forced softmax distributions embedded by expectation, so both
//! updates stay differentiable end to end.

mod discriminator;
mod losses;
mod model;
mod trainer;

pub use discriminator::{soft_embed, Discriminator, DiscriminatorInput, DISTRIBUTION_TOLERANCE};
pub use losses::{
    compose_generator_loss, discriminator_loss, generator_adversarial_loss, AdversarialObjective, PROBABILITY_CLAMP,
};
pub use model::{
    discriminator_accuracy, evaluate_standard_loss, gat_train_step, greedy_ids, seq2seq_train_step,
    teacher_forced_accuracy, GatModel, LossWeights, StepMetrics,
};
pub use trainer::{train, write_metrics_line, EpochRecord, TrainOutcome, TrainerConfig};

#[cfg(test)]
mod tests;
