use proptest::prelude::*;

use super::*;
use crate::conditions::{ConditionKind, SlotLexicon};
use crate::data::{EncodedTurn, Vocabulary, BOS_ID, EOS_ID};
use crate::error::Error;
use crate::tensor::{AdamConfig, AdamState, Graph, Parameterized, Tensor};
use crate::transformer::{MemoryAugmentedTransformer, ModelConfig};

fn config() -> ModelConfig {
    let mut c = ModelConfig::tiny(12, 8, 2, 1);
    c.max_seq_len = 8;
    c.max_memory_len = 6;
    c
}

fn turn(input: &[usize], memory: &[usize], body: &[usize]) -> EncodedTurn {
    let mut target = vec![BOS_ID];
    target.extend(body);
    target.push(EOS_ID);
    EncodedTurn {
        input: input.to_vec(),
        memory: memory.to_vec(),
        target,
        ..EncodedTurn::default()
    }
}

fn batch() -> Vec<EncodedTurn> {
    vec![
        turn(&[4, 5, 6], &[7, 8], &[9, 10]),
        turn(&[6, 5], &[], &[11]),
        turn(&[7, 7, 4, 9], &[10], &[4, 5, 6]),
    ]
}

fn adam() -> AdamConfig {
    AdamConfig {
        lr: 1e-2,
        ..AdamConfig::default()
    }
}

fn scalar(g: &Graph<f64>, v: crate::tensor::Var) -> f64 {
    g.value(v).values()[0]
}

#[test]
fn soft_embed_examples() {
    let table = Tensor::from_rows(&[vec![1.0, 2.0], vec![3.0, -1.0], vec![0.5, 0.25]]).unwrap();
    let mut g = Graph::<f64>::new();
    let t = g.constant(table);
    let one_hot = g.constant(Tensor::from_rows(&[vec![0.0, 1.0, 0.0]]).unwrap());
    let e = soft_embed(&mut g, one_hot, t).unwrap();
    assert_eq!(g.value(e).values(), &[3.0, -1.0]);
    let third = 1.0 / 3.0;
    let uniform = g.constant(Tensor::from_rows(&[vec![third; 3]]).unwrap());
    let e = soft_embed(&mut g, uniform, t).unwrap();
    assert!((g.value(e).values()[0] - 1.5).abs() < 1e-12);
    assert!((g.value(e).values()[1] - 1.25 / 3.0).abs() < 1e-12);
    let half = g.constant(Tensor::from_rows(&[vec![0.5, 0.5, 0.0]]).unwrap());
    let e = soft_embed(&mut g, half, t).unwrap();
    assert_eq!(g.value(e).values(), &[2.0, 0.5]);
    let bad = g.constant(Tensor::from_rows(&[vec![0.5, 0.0, 0.0]]).unwrap());
    assert!(matches!(soft_embed(&mut g, bad, t), Err(Error::Distribution { row: 0, .. })));
}

#[test]
fn soft_embed_gradients_reach_both_arguments() {
    let mut g = Graph::<f64>::new();
    let t = g.variable(Tensor::from_rows(&[vec![1.0, 2.0], vec![3.0, -1.0]]).unwrap());
    let d = g.variable(Tensor::from_rows(&[vec![0.25, 0.75]]).unwrap());
    let e = soft_embed(&mut g, d, t).unwrap();
    let loss = g.sum(e);
    let grads = g.backward(loss).unwrap();
    assert_eq!(grads.of(t).unwrap(), &[0.25, 0.25, 0.75, 0.75]);
    assert_eq!(grads.of(d).unwrap(), &[3.0, 2.0]);
}

#[test]
fn discriminator_score_contract() {
    let mut d = Discriminator::<f64>::new(config(), 3).unwrap();
    let s = d.score(&[4, 5, 2], &[7]).unwrap();
    assert!(s > 0.0 && s < 1.0);
    assert_eq!(s, d.score(&[4, 5, 2], &[7]).unwrap());
    assert!(matches!(d.score(&[], &[7]), Err(Error::Length(_))));
    assert!(matches!(d.score(&[40], &[]), Err(Error::Vocabulary { .. })));
    d.zero_head();
    assert_eq!(d.score(&[4, 5, 2], &[7]).unwrap(), 0.5);
}

#[test]
fn one_hot_distributions_score_like_tokens() {
    let d = Discriminator::<f64>::new(config(), 3).unwrap();
    let ids = [4, 9, 2];
    let mut rows = vec![vec![0.0; 12]; 3];
    for (r, &id) in rows.iter_mut().zip(&ids) {
        r[id] = 1.0;
    }
    let dist = Tensor::from_rows(&rows).unwrap();
    assert_eq!(d.score(&ids, &[5]).unwrap(), d.score_distributions(&dist, &[5]).unwrap());
}

#[test]
fn discriminator_loss_examples() {
    let mut g = Graph::<f64>::new();
    let half: Vec<_> = (0..3).map(|_| g.constant(Tensor::full(&[1, 1], 0.5))).collect();
    let l = discriminator_loss(&mut g, &half, &half[..2]).unwrap();
    assert!((scalar(&g, l) - 2.0 * 2f64.ln()).abs() < 1e-12);

    let eps = 1e-7;
    let real = [g.constant(Tensor::full(&[1, 1], 1.0 - eps))];
    let fake = [g.constant(Tensor::full(&[1, 1], eps))];
    let l = discriminator_loss(&mut g, &real, &fake).unwrap();
    assert!(scalar(&g, l) < 1e-5);

    let real = [g.constant(Tensor::full(&[1, 1], 0.0))];
    let l = discriminator_loss(&mut g, &real, &fake).unwrap();
    let v = scalar(&g, l);
    assert!(v >= 16.1 && v.is_finite());

    assert!(matches!(discriminator_loss(&mut g, &[], &fake), Err(Error::DegenerateBatch(_))));
    assert!(matches!(discriminator_loss(&mut g, &real, &[]), Err(Error::DegenerateBatch(_))));
}

#[test]
fn generator_adversarial_loss_examples() {
    let mut g = Graph::<f64>::new();
    let half = [g.constant(Tensor::full(&[1, 1], 0.5)), g.constant(Tensor::full(&[1, 1], 0.5))];
    let l = generator_adversarial_loss(&mut g, &half, AdversarialObjective::NonSaturating).unwrap();
    assert!((scalar(&g, l) - 2f64.ln()).abs() < 1e-12);
    let l = generator_adversarial_loss(&mut g, &half, AdversarialObjective::Minimax).unwrap();
    assert!((scalar(&g, l) + 2f64.ln()).abs() < 1e-12);

    let fooled = [g.constant(Tensor::full(&[1, 1], 1.0))];
    let l = generator_adversarial_loss(&mut g, &fooled, AdversarialObjective::NonSaturating).unwrap();
    assert!(scalar(&g, l) < 1e-6);
    let caught = [g.constant(Tensor::full(&[1, 1], 0.0))];
    let l = generator_adversarial_loss(&mut g, &caught, AdversarialObjective::NonSaturating).unwrap();
    assert!(scalar(&g, l) > 16.0 && scalar(&g, l).is_finite());
    assert!(generator_adversarial_loss(&mut g, &[], AdversarialObjective::Minimax).is_err());
}

fn composed(standard: f64, conditions: &[f64], adversarial: f64, weights: &[f64]) -> crate::error::Result<f64> {
    let mut g = Graph::<f64>::new();
    let s = g.scalar_constant(standard);
    let c: Vec<_> = conditions.iter().map(|&v| g.scalar_constant(v)).collect();
    let a = g.scalar_constant(adversarial);
    let out = compose_generator_loss(&mut g, s, &c, Some(a), weights)?;
    Ok(scalar(&g, out))
}

#[test]
fn compose_generator_loss_examples() {
    assert_eq!(composed(1.25, &[], 0.7, &[1.0, 0.0]).unwrap(), 1.25);
    assert!((composed(1.0, &[0.5], 0.2, &[1.0, 1.0, 1.0]).unwrap() - 1.7).abs() < 1e-12);
    assert!((composed(1.0, &[0.5], 0.2, &[1.0, 2.0, 1.0]).unwrap() - 2.2).abs() < 1e-12);
    assert!(matches!(composed(1.0, &[0.5], 0.2, &[1.0, 1.0]), Err(Error::Config(_))));
    assert!(matches!(composed(1.0, &[], 0.2, &[1.0, -1.0]), Err(Error::Config(_))));
}

proptest! {
    #[test]
    fn compose_is_linear_in_each_argument(
        s in -5.0f64..5.0, c in -5.0f64..5.0, a in -5.0f64..5.0,
        w in proptest::collection::vec(0.0f64..3.0, 3),
        k in -2.0f64..2.0,
    ) {
        let base = composed(s, &[c], a, &w).unwrap();
        let ds = composed(s + k, &[c], a, &w).unwrap() - base;
        let dc = composed(s, &[c + k], a, &w).unwrap() - base;
        let da = composed(s, &[c], a + k, &w).unwrap() - base;
        prop_assert!((ds - w[0] * k).abs() < 1e-9);
        prop_assert!((dc - w[1] * k).abs() < 1e-9);
        prop_assert!((da - w[2] * k).abs() < 1e-9);
    }

    #[test]
    fn fake_distributions_are_normalised(
        input in proptest::collection::vec(3usize..12, 1..6),
        body in proptest::collection::vec(3usize..12, 0..5),
        seed in 0u64..50,
    ) {
        let model = MemoryAugmentedTransformer::<f64>::new(config(), seed).unwrap();
        let t = turn(&input, &[5, 6], &body);
        let mut g = Graph::new();
        let l = model.forward(&mut g, &t.input, &t.memory, t.decoder_input()).unwrap();
        let p = g.softmax(l, 1).unwrap();
        for row in g.value(p).values().chunks(12) {
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }
}

#[test]
fn gat_model_rejects_mismatched_parts() {
    let g = MemoryAugmentedTransformer::<f64>::new(config(), 1).unwrap();
    let mut other = config();
    other.vocab_size = 13;
    let d = Discriminator::new(other, 2).unwrap();
    assert!(matches!(
        GatModel::new(g.clone(), d, adam(), vec![], LossWeights::uniform(0)),
        Err(Error::Config(_))
    ));
    let d = Discriminator::new(config(), 2).unwrap();
    assert!(matches!(
        GatModel::new(g, d, adam(), vec![], LossWeights::uniform(1)),
        Err(Error::Config(_))
    ));
}

fn poi_model(seed: u64) -> GatModel<f64> {
    let vocab = Vocabulary::from_tokens(
        ["<pad>", "<bos>", "<eos>", "<unk>", ":", "|", "poi", "poitype", "is", "the", "a", "near"]
            .map(String::from)
            .to_vec(),
    )
    .unwrap();
    let lex = SlotLexicon::new(["poi", "poitype"]).unwrap();
    let conditions = vec![
        ConditionKind::Poi.build(&lex, &vocab),
        ConditionKind::PoiDifferentiable.build(&lex, &vocab),
    ];
    GatModel::from_config(config(), seed, adam(), conditions, LossWeights::uniform(2)).unwrap()
}

#[test]
fn train_step_is_deterministic() {
    let (mut a, mut b) = (poi_model(5), poi_model(5));
    for _ in 0..2 {
        let ma = gat_train_step(&mut a, &batch()).unwrap();
        let mb = gat_train_step(&mut b, &batch()).unwrap();
        assert_eq!(ma, mb);
        assert_eq!(ma.condition_losses.len(), 2);
        assert!(ma.condition_losses.iter().all(|l| (0.0..=1.0).contains(l)));
    }
    assert_eq!(a.generator.params().to_records(), b.generator.params().to_records());
    assert!(matches!(gat_train_step(&mut a, &[]), Err(Error::DegenerateBatch(_))));
}

#[test]
fn zero_weights_reduce_to_plain_training() {
    let mut gat = poi_model(9);
    gat.weights = LossWeights::baseline(2);
    let mut plain = gat.generator.clone();
    let mut opt = AdamState::new(adam(), plain.params());
    for _ in 0..3 {
        let m = gat_train_step(&mut gat, &batch()).unwrap();
        let loss = seq2seq_train_step(&mut plain, &mut opt, &batch()).unwrap();
        assert_eq!(m.standard_loss, loss);
    }
    assert_eq!(gat.generator.params().to_records(), plain.params().to_records());
}

#[test]
fn frozen_generator_is_left_untouched() {
    let mut gat = poi_model(2);
    gat.train_generator = false;
    let before = gat.generator.params().to_records();
    let d_before = gat.discriminator.params().to_records();
    gat_train_step(&mut gat, &batch()).unwrap();
    assert_eq!(before, gat.generator.params().to_records());
    assert_ne!(d_before, gat.discriminator.params().to_records());
}

#[test]
fn discriminator_learns_to_separate_frozen_noise() {
    let mut gat = GatModel::<f64>::from_config(config(), 4, adam(), vec![], LossWeights::baseline(0)).unwrap();
    gat.train_generator = false;
    let data = batch();
    for _ in 0..60 {
        gat_train_step(&mut gat, &data).unwrap();
    }
    assert!(discriminator_accuracy(&gat, &data).unwrap() > 0.9);
}

#[test]
fn discriminator_checkpoint_round_trip() {
    let d = Discriminator::<f64>::new(config(), 8).unwrap();
    let ckpt = d.to_checkpoint(vec![]);
    let back = Discriminator::<f64>::from_checkpoint(&ckpt).unwrap();
    assert_eq!(d.score(&[4, 2], &[6]).unwrap(), back.score(&[4, 2], &[6]).unwrap());
    let mut wrong = ckpt.clone();
    wrong.kind = "generator".into();
    assert!(matches!(Discriminator::<f64>::from_checkpoint(&wrong), Err(Error::Compatibility(_))));
}

#[test]
fn trainer_is_deterministic_and_keeps_best() {
    let cfg = TrainerConfig {
        epochs: 4,
        batch_size: 2,
        seed: 1,
        shuffle: true,
    };
    let run = || {
        let mut m = poi_model(3);
        let mut lines = Vec::new();
        let out = train(&mut m, &batch(), &batch()[..1], &cfg, |r| write_metrics_line(&mut lines, r)).unwrap();
        (out, String::from_utf8(lines).unwrap())
    };
    let (a, la) = run();
    let (b, lb) = run();
    assert_eq!(la, lb);
    assert_eq!(la.lines().count(), 4);
    assert_eq!(a.records, b.records);
    let best = a
        .records
        .iter()
        .min_by(|x, y| x.selection_loss().partial_cmp(&y.selection_loss()).unwrap())
        .unwrap();
    assert_eq!(a.best_epoch, best.epoch);
    assert!(a.records.iter().all(|r| r.steps == 2 && r.validation_loss.is_some()));
}

#[test]
fn teacher_forced_accuracy_counts_eos() {
    let m = MemoryAugmentedTransformer::<f64>::new(config(), 0).unwrap();
    let acc = teacher_forced_accuracy(&m, &batch()).unwrap();
    assert!((0.0..=1.0).contains(&acc));
    let total: usize = batch().iter().map(|t| t.labels().len()).sum();
    assert!(((acc * total as f64).round() - acc * total as f64).abs() < 1e-9);
}
