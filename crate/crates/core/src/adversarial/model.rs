use serde::{Deserialize, Serialize};

use super::discriminator::{Discriminator, DiscriminatorInput};
use super::losses::{compose_generator_loss, discriminator_loss, generator_adversarial_loss, AdversarialObjective};
use crate::conditions::{ConditionInput, ConditionLoss};
use crate::data::EncodedTurn;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{adam_step, AdamConfig, AdamState, Graph, Parameterized, Tensor, Var};
use crate::transformer::{argmax, MemoryAugmentedTransformer, ModelConfig};

/// Loss weights: the standard term, one per condition, then the
/// adversarial term.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub standard: f64,
    pub conditions: Vec<f64>,
    pub adversarial: f64,
}

impl LossWeights {
    /// All ones.
    pub fn uniform(conditions: usize) -> Self {
        Self {
            standard: 1.0,
            conditions: vec![1.0; conditions],
            adversarial: 1.0,
        }
    }

    /// Standard loss only.
    pub fn baseline(conditions: usize) -> Self {
        Self {
            standard: 1.0,
            conditions: vec![0.0; conditions],
            adversarial: 0.0,
        }
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut w = Vec::with_capacity(self.conditions.len() + 2);
        w.push(self.standard);
        w.extend(&self.conditions);
        w.push(self.adversarial);
        w
    }
}

/// Metrics of one [`gat_train_step`], averaged over the batch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepMetrics {
    pub standard_loss: f64,
    pub condition_losses: Vec<f64>,
    pub adversarial_loss: f64,
    pub discriminator_loss: f64,
    /// Share of real scores above 0.5 and fake scores below it, measured
    /// before the discriminator update.
    pub discriminator_accuracy: f64,
}

/// Generator and discriminator with their optimizer states and the
/// generator's condition losses.
#[derive(Debug)]
pub struct GatModel<T: Scalar> {
    pub generator: MemoryAugmentedTransformer<T>,
    pub discriminator: Discriminator<T>,
    pub generator_optimizer: AdamState<T>,
    pub discriminator_optimizer: AdamState<T>,
    pub conditions: Vec<Box<dyn ConditionLoss<T>>>,
    pub weights: LossWeights,
    pub objective: AdversarialObjective,
    /// A frozen generator still produces fakes but is never updated.
    pub train_generator: bool,
    pub train_discriminator: bool,
}

impl<T: Scalar> GatModel<T> {
    pub fn new(
        generator: MemoryAugmentedTransformer<T>,
        discriminator: Discriminator<T>,
        optimizer: AdamConfig,
        conditions: Vec<Box<dyn ConditionLoss<T>>>,
        weights: LossWeights,
    ) -> Result<Self> {
        let (gv, dv) = (generator.config().vocab_size, discriminator.config().vocab_size);
        if gv != dv {
            return Err(Error::Config(format!(
                "generator vocabulary {gv} differs from discriminator vocabulary {dv}"
            )));
        }
        if weights.conditions.len() != conditions.len() {
            return Err(Error::Config(format!(
                "{} condition weights for {} conditions",
                weights.conditions.len(),
                conditions.len()
            )));
        }
        let generator_optimizer = AdamState::new(optimizer, generator.params());
        let discriminator_optimizer = AdamState::new(optimizer, discriminator.params());
        Ok(Self {
            generator,
            discriminator,
            generator_optimizer,
            discriminator_optimizer,
            conditions,
            weights,
            objective: AdversarialObjective::default(),
            train_generator: true,
            train_discriminator: true,
        })
    }

    /// Generator and a discriminator of the same shape, seeded
    /// `seed` and `seed + 1`.
    pub fn from_config(
        config: ModelConfig,
        seed: u64,
        optimizer: AdamConfig,
        conditions: Vec<Box<dyn ConditionLoss<T>>>,
        weights: LossWeights,
    ) -> Result<Self> {
        let generator = MemoryAugmentedTransformer::new(config.clone(), seed)?;
        let discriminator = Discriminator::new(config, seed.wrapping_add(1))?;
        Self::new(generator, discriminator, optimizer, conditions, weights)
    }
}

/// Greedy ids read off teacher-forced logits, cut at the first `eos`.
pub fn greedy_ids<T: Scalar>(logits: &Tensor<T>, eos: usize) -> Result<Vec<usize>> {
    let (t, _) = logits.dims2()?;
    let mut out = Vec::with_capacity(t);
    for i in 0..t {
        let id = argmax(logits.row(i));
        if id == eos {
            break;
        }
        out.push(id);
    }
    Ok(out)
}

fn check_batch(batch: &[EncodedTurn]) -> Result<()> {
    if batch.is_empty() {
        return Err(Error::DegenerateBatch("empty training batch".into()));
    }
    Ok(())
}

/// Teacher-forced logits for every item, recorded in `g`.
fn generator_logits<T: Scalar>(
    g: &mut Graph<T>,
    generator: &MemoryAugmentedTransformer<T>,
    batch: &[EncodedTurn],
) -> Result<Vec<Var>> {
    batch
        .iter()
        .map(|turn| generator.forward(g, &turn.input, &turn.memory, turn.decoder_input()))
        .collect()
}

/// Batch mean of the per-sequence mean token negative log-likelihood.
fn standard_loss<T: Scalar>(
    g: &mut Graph<T>,
    logits: &[Var],
    batch: &[EncodedTurn],
    pad: usize,
) -> Result<Var> {
    let mut terms = Vec::with_capacity(batch.len());
    for (&l, turn) in logits.iter().zip(batch) {
        terms.push(g.cross_entropy(l, turn.labels(), pad)?);
    }
    batch_mean(g, &terms)
}

fn batch_mean<T: Scalar>(g: &mut Graph<T>, terms: &[Var]) -> Result<Var> {
    let mut total = terms[0];
    for &t in &terms[1..] {
        total = g.add(total, t)?;
    }
    Ok(if terms.len() == 1 {
        total
    } else {
        g.scale(total, T::one() / T::of(terms.len() as f64))
    })
}

fn scalar_of<T: Scalar>(g: &Graph<T>, v: Var) -> f64 {
    g.value(v).values()[0].to_f64().unwrap_or(f64::NAN)
}

/// One plain sequence-to-sequence update on the standard loss. This is the
/// reference that [`gat_train_step`] reduces to when every extra weight is 0.
pub fn seq2seq_train_step<T: Scalar>(
    generator: &mut MemoryAugmentedTransformer<T>,
    optimizer: &mut AdamState<T>,
    batch: &[EncodedTurn],
) -> Result<f64> {
    check_batch(batch)?;
    let mut g = Graph::new();
    let logits = generator_logits(&mut g, generator, batch)?;
    let loss = standard_loss(&mut g, &logits, batch, generator.config().pad_id)?;
    let grads = g.backward(loss)?;
    grads.accumulate_into(generator.params_mut());
    adam_step(generator.params_mut(), optimizer)?;
    Ok(scalar_of(&g, loss))
}

/// One round of the game on a batch: the generator produces teacher-forced
/// distributions, the discriminator is updated on real targets against
/// those distributions, then the generator is updated on the composed loss
/// using the freshly updated discriminator.
pub fn gat_train_step<T: Scalar>(model: &mut GatModel<T>, batch: &[EncodedTurn]) -> Result<StepMetrics> {
    check_batch(batch)?;
    let weights = model.weights.to_vec();
    let adv_weight = model.weights.adversarial;
    let (pad, eos) = (model.generator.config().pad_id, model.generator.config().eos_id);

    let mut g = Graph::new();
    let logits = generator_logits(&mut g, &model.generator, batch)?;
    let mut probs = Vec::with_capacity(batch.len());
    for &l in &logits {
        probs.push(g.softmax(l, 1)?);
    }

    // Discriminator step on detached fakes.
    let mut dg = Graph::new();
    let mut real = Vec::with_capacity(batch.len());
    let mut fake = Vec::with_capacity(batch.len());
    for (turn, &p) in batch.iter().zip(&probs) {
        real.push(model.discriminator.score_graph(&mut dg, DiscriminatorInput::Tokens(turn.labels()), &turn.memory)?);
        let d = dg.constant(g.value(p).clone());
        fake.push(model.discriminator.score_graph(&mut dg, DiscriminatorInput::Distributions(d), &turn.memory)?);
    }
    let correct = real.iter().filter(|&&s| scalar_of(&dg, s) > 0.5).count()
        + fake.iter().filter(|&&s| scalar_of(&dg, s) < 0.5).count();
    let d_loss = discriminator_loss(&mut dg, &real, &fake)?;
    if model.train_discriminator {
        let grads = dg.backward(d_loss)?;
        let store = model.discriminator.params_mut();
        grads.accumulate_into(store);
        adam_step(store, &mut model.discriminator_optimizer)?;
    }

    // Generator step.
    let standard = standard_loss(&mut g, &logits, batch, pad)?;
    let mut condition_terms = Vec::with_capacity(model.conditions.len());
    for cond in &model.conditions {
        let mut per_item = Vec::with_capacity(batch.len());
        for (turn, &l) in batch.iter().zip(&logits) {
            let predicted = greedy_ids(g.value(l), eos)?;
            let input = ConditionInput {
                logits: l,
                predicted: &predicted,
                memory: &turn.memory,
            };
            per_item.push(cond.evaluate(&mut g, &input)?);
        }
        condition_terms.push(batch_mean(&mut g, &per_item)?);
    }
    let adversarial = if adv_weight != 0.0 || !model.train_generator {
        let mut scores = Vec::with_capacity(batch.len());
        for (turn, &p) in batch.iter().zip(&probs) {
            scores.push(model.discriminator.score_graph(&mut g, DiscriminatorInput::Distributions(p), &turn.memory)?);
        }
        Some(generator_adversarial_loss(&mut g, &scores, model.objective)?)
    } else {
        None
    };
    let total = compose_generator_loss(&mut g, standard, &condition_terms, adversarial, &weights)?;
    if model.train_generator {
        let grads = g.backward(total)?;
        let store = model.generator.params_mut();
        grads.accumulate_into(store);
        adam_step(store, &mut model.generator_optimizer)?;
    }

    Ok(StepMetrics {
        standard_loss: scalar_of(&g, standard),
        condition_losses: condition_terms.iter().map(|&c| scalar_of(&g, c)).collect(),
        adversarial_loss: adversarial.map_or(0.0, |a| scalar_of(&g, a)),
        discriminator_loss: scalar_of(&dg, d_loss),
        discriminator_accuracy: correct as f64 / (2 * batch.len()) as f64,
    })
}

/// Discriminator accuracy on real targets against teacher-forced generator
/// distributions, without updating anything.
pub fn discriminator_accuracy<T: Scalar>(model: &GatModel<T>, turns: &[EncodedTurn]) -> Result<f64> {
    check_batch(turns)?;
    let mut correct = 0;
    for turn in turns {
        let mut g = Graph::new();
        let l = model.generator.forward(&mut g, &turn.input, &turn.memory, turn.decoder_input())?;
        let p = g.softmax(l, 1)?;
        let real = model.discriminator.score(turn.labels(), &turn.memory)?;
        let fake = model.discriminator.score_distributions(g.value(p), &turn.memory)?;
        correct += usize::from(real > T::of(0.5)) + usize::from(fake < T::of(0.5));
    }
    Ok(correct as f64 / (2 * turns.len()) as f64)
}

/// Mean standard loss without updates.
pub fn evaluate_standard_loss<T: Scalar>(generator: &MemoryAugmentedTransformer<T>, turns: &[EncodedTurn]) -> Result<f64> {
    check_batch(turns)?;
    let mut total = 0.0;
    for turn in turns {
        let mut g = Graph::new();
        let l = generator.forward(&mut g, &turn.input, &turn.memory, turn.decoder_input())?;
        let loss = g.cross_entropy(l, turn.labels(), generator.config().pad_id)?;
        total += scalar_of(&g, loss);
    }
    Ok(total / turns.len() as f64)
}

/// Share of target tokens (including `eos`) predicted correctly under
/// teacher forcing.
pub fn teacher_forced_accuracy<T: Scalar>(generator: &MemoryAugmentedTransformer<T>, turns: &[EncodedTurn]) -> Result<f64> {
    check_batch(turns)?;
    let (mut hit, mut total) = (0, 0);
    for turn in turns {
        let mut g = Graph::new();
        let l = generator.forward(&mut g, &turn.input, &turn.memory, turn.decoder_input())?;
        let logits = g.value(l);
        for (i, &label) in turn.labels().iter().enumerate() {
            hit += usize::from(argmax(logits.row(i)) == label);
            total += 1;
        }
    }
    Ok(hit as f64 / total as f64)
}
