//! Acceptance suite: one PASS/FAIL line per criterion. Runs as a plain
//! binary so the lines appear in order even under `cargo test`.

use std::fs;
use std::time::Instant;

use memgat::adversarial::{
    discriminator_accuracy, gat_train_step, seq2seq_train_step, teacher_forced_accuracy, train, GatModel,
    LossWeights, TrainerConfig,
};
use memgat::conditions::{ConditionKind, SlotLexicon};
use memgat::data::synth::{generate_car_corpus, generate_style_corpus, style_corpus_tsv, CarSynthConfig};
use memgat::data::{
    attenuate, build_stage_datasets, detokenize, encode_turn, split_train_test, tokenize, DialogueTurn,
    EncodeLimits, EncodedTurn, Superlatives, ValueTable, Vocabulary, BOS_ID, EOS_ID,
};
use memgat::evaluation::{bleu, paired_bootstrap, slot_answer_accuracy};
use memgat::pipeline::{
    construct_kb_query, fill_slots_deterministic, resolve_query, run_three_stage, PipelineConfig, StageModels,
};
use memgat::tensor::{primitive_cases, AdamConfig, AdamState, Parameterized};
use memgat::transformer::{MemoryAugmentedTransformer, ModelConfig};
use memgat_cli::config::{DataPaths, ModelSettings, RunConfig, Task, WeightSettings};
use memgat_cli::selfcheck::{
    empty_memory_gap, generator_gradient_error, metric_oracles, poi_oracle_gap, ter_mismatches,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// Tolerances and budgets.
const GRADIENT_MAX_REL_ERROR: f64 = 1e-4;
const GRADIENT_SECONDS: f64 = 60.0;
const EQUIVALENCE_TOL: f64 = 1e-9;
const EQUIVALENCE_INPUTS: usize = 100;
const POI_TOL: f64 = 1e-12;
const POI_PAIRS: usize = 200;
const METRIC_TOL: f64 = 1e-4;
const TER_PAIRS: usize = 500;
const OVERFIT_ROWS: usize = 32;
const OVERFIT_MIN_ACCURACY: f64 = 0.99;
const OVERFIT_MAX_STEPS: usize = 2000;
const OVERFIT_SECONDS: f64 = 600.0;
const FROZEN_MIN_ACCURACY: f64 = 0.9;
const FROZEN_MAX_STEPS: usize = 200;
const JOINT_MAX_ACCURACY: f64 = 0.75;
const JOINT_MAX_STEPS: usize = 1000;
const ABLATION_MIN_RATIO: f64 = 3.0;
const ABLATION_MAX_P: f64 = 0.05;
const ABLATION_SECONDS: f64 = 1200.0;
const CONDITION_TOLERANCE: f64 = 0.02;
const CONDITION_SEEDS: u64 = 3;
const PIPELINE_QUESTIONS: usize = 50;
const PIPELINE_MIN_EXACT: f64 = 0.8;

type Check = Result<(bool, String), String>;

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn small(vocab: usize, d: usize, heads: usize, layers: usize, seq: usize, mem: usize) -> ModelConfig {
    let mut c = ModelConfig::tiny(vocab, d, heads, layers);
    c.max_seq_len = seq;
    c.max_memory_len = mem;
    c.feedforward_dim = Some(2 * d);
    c
}

fn adam(lr: f64) -> AdamConfig {
    AdamConfig {
        lr,
        ..AdamConfig::default()
    }
}

fn encode_all(turns: &[DialogueTurn], vocab: &Vocabulary, limits: EncodeLimits, ablate: bool) -> Vec<EncodedTurn> {
    turns
        .iter()
        .map(|t| {
            let e = encode_turn(t, vocab, limits);
            if ablate {
                e.without_memory()
            } else {
                e
            }
        })
        .collect()
}

fn greedy(m: &MemoryAugmentedTransformer<f64>, vocab: &Vocabulary, turns: &[EncodedTurn]) -> Vec<String> {
    turns
        .iter()
        .map(|e| detokenize(&vocab.decode(&m.generate(&e.input, &e.memory, m.config().max_seq_len))))
        .collect()
}

fn gradient_fidelity() -> Check {
    let start = Instant::now();
    let mut worst = (0.0f64, String::new());
    let mut count = 0;
    for mut case in primitive_cases() {
        let r = case.check(1e-5).map_err(err)?;
        count += 1;
        if r.max_relative_error >= worst.0 {
            worst = (r.max_relative_error, case.name.clone());
        }
    }
    let generator = generator_gradient_error().map_err(err)?;
    let secs = start.elapsed().as_secs_f64();
    Ok((
        worst.0 < GRADIENT_MAX_REL_ERROR && generator < GRADIENT_MAX_REL_ERROR && secs < GRADIENT_SECONDS,
        format!(
            "{count} primitives, worst {:.2e} ({}), generator {generator:.2e}, {secs:.1}s",
            worst.0, worst.1
        ),
    ))
}

fn empty_memory() -> Check {
    let gap = empty_memory_gap(EQUIVALENCE_INPUTS, 17).map_err(err)?;
    Ok((gap < EQUIVALENCE_TOL, format!("max gap {gap:.1e} over {EQUIVALENCE_INPUTS} inputs")))
}

fn poi_oracle() -> Check {
    let gap = poi_oracle_gap(POI_PAIRS, 23);
    Ok((gap <= POI_TOL, format!("max gap {gap:.1e} over {POI_PAIRS} pairs")))
}

fn metric_oracle() -> Check {
    let rows = metric_oracles().map_err(err)?;
    let worst = rows.iter().map(|(_, a, b)| (a - b).abs()).fold(0.0, f64::max);
    let bad = ter_mismatches(TER_PAIRS, 29).map_err(err)?;
    Ok((
        worst < METRIC_TOL && bad == 0,
        format!("{} examples, worst gap {worst:.1e}; TER greedy≠exact on {bad}/{TER_PAIRS}", rows.len()),
    ))
}

fn overfit() -> Check {
    let start = Instant::now();
    let corpus = generate_car_corpus(&CarSynthConfig::default()).map_err(err)?;
    let d = build_stage_datasets(&corpus.raw, &corpus.kb, &SlotLexicon::car(), &Superlatives::default()).map_err(err)?;
    let rows = &d.stage1[..OVERFIT_ROWS];
    let vocab = Vocabulary::build(rows.iter().flat_map(|t| t.all_tokens()));
    let cfg = small(vocab.len(), 32, 4, 2, 24, 8);
    let limits = EncodeLimits {
        max_seq_len: 24,
        max_memory_len: 8,
    };
    let enc = encode_all(rows, &vocab, limits, false);
    let mut m = MemoryAugmentedTransformer::<f64>::new(cfg, 1).map_err(err)?;
    let mut opt = AdamState::new(adam(3e-3), m.params());
    let (mut steps, mut acc) = (0, 0.0);
    while steps < OVERFIT_MAX_STEPS {
        for b in enc.chunks(8) {
            seq2seq_train_step(&mut m, &mut opt, b).map_err(err)?;
            steps += 1;
        }
        acc = teacher_forced_accuracy(&m, &enc).map_err(err)?;
        if acc >= OVERFIT_MIN_ACCURACY {
            break;
        }
    }
    let outputs = greedy(&m, &vocab, &enc);
    let exact = outputs.iter().zip(rows).filter(|(o, t)| **o == detokenize(&tokenize(&t.target))).count();
    let example_in = "can you find me the fastest route to a parking garage";
    let example_out = "can you find me the poidistance route to a poitype";
    let example = rows[0].input == example_in && outputs[0] == example_out;
    let secs = start.elapsed().as_secs_f64();
    Ok((
        acc >= OVERFIT_MIN_ACCURACY && exact == rows.len() && example && secs < OVERFIT_SECONDS,
        format!(
            "accuracy {acc:.4} after {steps} steps, {exact}/{} exact, worked example {}, {secs:.1}s",
            rows.len(),
            if example { "reproduced" } else { "missed" }
        ),
    ))
}

/// Copy task: the target repeats the input, memory holds its first token.
fn copy_task(n: usize, seed: u64) -> Vec<EncodedTurn> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let len = rng.gen_range(2..6);
            let input: Vec<usize> = (0..len).map(|_| rng.gen_range(4..12)).collect();
            let mut target = vec![BOS_ID];
            target.extend(&input);
            target.push(EOS_ID);
            EncodedTurn {
                memory: vec![input[0]],
                input,
                target,
                ..EncodedTurn::default()
            }
        })
        .collect()
}

fn adversarial_sanity() -> Check {
    let train_set = copy_task(64, 1);
    let held = copy_task(32, 2);
    let mut cfg = ModelConfig::tiny(12, 16, 2, 1);
    cfg.max_seq_len = 8;
    cfg.max_memory_len = 4;
    cfg.feedforward_dim = Some(32);
    let weights = LossWeights {
        standard: 1.0,
        conditions: vec![],
        adversarial: 0.1,
    };
    let mut m = GatModel::<f64>::from_config(cfg, 3, adam(3e-3), vec![], weights).map_err(err)?;
    m.train_generator = false;
    let (mut steps, mut frozen_acc) = (0, 0.0);
    while steps < FROZEN_MAX_STEPS {
        for b in train_set.chunks(8) {
            gat_train_step(&mut m, b).map_err(err)?;
            steps += 1;
        }
        frozen_acc = discriminator_accuracy(&m, &held).map_err(err)?;
        if frozen_acc > FROZEN_MIN_ACCURACY {
            break;
        }
    }
    let frozen_steps = steps;
    m.train_generator = true;
    let (mut joint, mut joint_acc) = (0, 1.0);
    while joint < JOINT_MAX_STEPS {
        for b in train_set.chunks(8) {
            gat_train_step(&mut m, b).map_err(err)?;
            joint += 1;
        }
        joint_acc = discriminator_accuracy(&m, &held).map_err(err)?;
        if joint_acc < JOINT_MAX_ACCURACY {
            break;
        }
    }
    Ok((
        frozen_acc > FROZEN_MIN_ACCURACY && joint_acc < JOINT_MAX_ACCURACY,
        format!(
            "frozen generator: accuracy {frozen_acc:.3} after {frozen_steps} steps; joint: {joint_acc:.3} after {joint} more"
        ),
    ))
}

fn memory_ablation() -> Check {
    let start = Instant::now();
    let turns = generate_style_corpus(500, 7).map_err(err)?;
    let (train_set, test) = split_train_test(&turns, 0.2, 7).map_err(err)?;
    let vocab = Vocabulary::build(turns.iter().flat_map(|t| t.all_tokens()));
    let limits = EncodeLimits {
        max_seq_len: 24,
        max_memory_len: 8,
    };
    let references: Vec<String> = test.iter().map(|t| detokenize(&tokenize(&t.target))).collect();
    let mut outputs = Vec::new();
    for ablate in [false, true] {
        let tr = encode_all(&train_set, &vocab, limits, ablate);
        let te = encode_all(&test, &vocab, limits, ablate);
        let mut m = MemoryAugmentedTransformer::<f64>::new(small(vocab.len(), 32, 4, 2, 24, 8), 1).map_err(err)?;
        let mut opt = AdamState::new(adam(3e-3), m.params());
        for _ in 0..8 {
            for b in tr.chunks(8) {
                seq2seq_train_step(&mut m, &mut opt, b).map_err(err)?;
            }
        }
        outputs.push(greedy(&m, &vocab, &te));
    }
    let score = |c: &[String]| bleu(c, &references, 4).map(|b| b.score);
    let (with, without) = (score(&outputs[0]).map_err(err)?, score(&outputs[1]).map_err(err)?);
    let boot = paired_bootstrap(
        &outputs[0],
        &outputs[1],
        &references,
        |c, r| Ok(bleu(c, r, 4)?.score),
        1000,
        1,
    )
    .map_err(err)?;
    let secs = start.elapsed().as_secs_f64();
    Ok((
        with >= ABLATION_MIN_RATIO * without && boot.p_value < ABLATION_MAX_P && secs < ABLATION_SECONDS,
        format!(
            "BLEU-4 with memory {with:.1}, ablated {without:.1}, p {:.4}, {} held-out turns, {secs:.1}s",
            boot.p_value,
            references.len()
        ),
    ))
}

fn condition_direction() -> Check {
    let openers = [
        "", "hey", "please", "hi car", "excuse me", "quick question", "ok car", "hello", "car", "so", "um", "listen",
    ]
    .map(String::from)
    .to_vec();
    let corpus = generate_car_corpus(&CarSynthConfig {
        openers,
        ..CarSynthConfig::default()
    })
    .map_err(err)?;
    let lexicon = SlotLexicon::car();
    let d = build_stage_datasets(&corpus.raw, &corpus.kb, &lexicon, &Superlatives::default()).map_err(err)?;
    let vocab = Vocabulary::build(d.stage1.iter().chain(&d.stage2).chain(&d.stage3).flat_map(|t| t.all_tokens()));
    let limits = EncodeLimits {
        max_seq_len: 24,
        max_memory_len: 16,
    };
    let mut pass = true;
    let mut detail = Vec::new();
    for seed in 0..CONDITION_SEEDS {
        let (train_set, test) = split_train_test(&d.stage2, 0.2, seed).map_err(err)?;
        let tr = encode_all(&train_set, &vocab, limits, false);
        let te = encode_all(&test, &vocab, limits, false);
        let references: Vec<&str> = test.iter().map(|t| t.target.as_str()).collect();
        let mut acc = [0.0; 2];
        for (k, weight) in [0.0, 0.1].into_iter().enumerate() {
            let conditions = vec![ConditionKind::PoiDifferentiable.build::<f64>(&lexicon, &vocab)];
            let weights = LossWeights {
                standard: 1.0,
                conditions: vec![weight],
                adversarial: 0.0,
            };
            let mut m = GatModel::from_config(small(vocab.len(), 32, 4, 2, 24, 16), seed, adam(3e-3), conditions, weights)
                .map_err(err)?;
            m.train_discriminator = false;
            let tc = TrainerConfig {
                epochs: 30,
                batch_size: 8,
                seed,
                shuffle: true,
            };
            train(&mut m, &tr, &[], &tc, |_| Ok(())).map_err(err)?;
            let outputs = greedy(&m.generator, &vocab, &te);
            acc[k] = slot_answer_accuracy(&outputs, &references, &lexicon).map_err(err)?;
        }
        pass &= acc[1] >= acc[0] - CONDITION_TOLERANCE;
        detail.push(format!("seed {seed}: standard {:.3}, +poi {:.3}", acc[0], acc[1]));
    }
    Ok((pass, detail.join("; ")))
}

fn pipeline_oracle() -> Check {
    let start = Instant::now();
    let corpus = generate_car_corpus(&CarSynthConfig::default()).map_err(err)?;
    let lexicon = SlotLexicon::car();
    let sup = Superlatives::default();

    let mut oracle_hits = 0;
    for r in &corpus.raw {
        let entries = corpus.kb.entries(&r.scenario);
        let table = ValueTable::for_scenario(entries, &sup);
        let q = attenuate(&r.question, &table);
        let resolved = construct_kb_query(&q.alignment, &sup).and_then(|query| resolve_query(&query, entries));
        if let Ok(res) = resolved {
            let template = attenuate(&r.answer, &table).text();
            let filled = fill_slots_deterministic(&tokenize(&template), &res.memory_items(), lexicon.names());
            oracle_hits += (filled.text() == detokenize(&tokenize(&r.answer))) as usize;
        }
    }

    let (train_raw, test_raw) = split_train_test(&corpus.raw, 0.2, 3).map_err(err)?;
    let d = build_stage_datasets(&train_raw, &corpus.kb, &lexicon, &sup).map_err(err)?;
    let all = build_stage_datasets(&corpus.raw, &corpus.kb, &lexicon, &sup).map_err(err)?;
    let vocab = Vocabulary::build(all.stage1.iter().chain(&all.stage2).chain(&all.stage3).flat_map(|t| t.all_tokens()));
    let limits = EncodeLimits {
        max_seq_len: 24,
        max_memory_len: 48,
    };
    let mut models = Vec::new();
    for rows in [&d.stage1, &d.stage2, &d.stage3] {
        let enc = encode_all(rows, &vocab, limits, false);
        let mut m = MemoryAugmentedTransformer::<f64>::new(small(vocab.len(), 32, 4, 2, 24, 48), 1).map_err(err)?;
        let mut opt = AdamState::new(adam(3e-3), m.params());
        for _ in 0..100 {
            for b in enc.chunks(8) {
                seq2seq_train_step(&mut m, &mut opt, b).map_err(err)?;
            }
        }
        models.push(m);
    }
    let filling = models.pop().expect("three models");
    let mapping = models.pop().expect("three models");
    let detection = models.pop().expect("three models");
    let stages = StageModels::new(detection, mapping, filling, vocab).map_err(err)?;
    let config = PipelineConfig::default();
    let questions = &test_raw[..PIPELINE_QUESTIONS];
    let mut exact = 0;
    for r in questions {
        let out = run_three_stage(&r.question, corpus.kb.entries(&r.scenario), &stages, &config).map_err(err)?;
        exact += (out.answer == detokenize(&tokenize(&r.answer))) as usize;
    }
    let share = exact as f64 / questions.len() as f64;
    let secs = start.elapsed().as_secs_f64();
    Ok((
        oracle_hits == corpus.raw.len() && share >= PIPELINE_MIN_EXACT,
        format!(
            "oracle {oracle_hits}/{} rows; trained stages {exact}/{} held-out questions; {secs:.1}s",
            corpus.raw.len(),
            questions.len()
        ),
    ))
}

fn determinism() -> Check {
    let dir = tempfile::tempdir().map_err(err)?;
    let data = dir.path().join("style.tsv");
    fs::write(&data, style_corpus_tsv(&generate_style_corpus(60, 4).map_err(err)?)).map_err(err)?;
    let base = RunConfig {
        task: Task::Style,
        seed: 11,
        epochs: 3,
        batch_size: 8,
        output_dir: dir.path().join("run-a"),
        ablate_memory: false,
        objective: Default::default(),
        conditions: vec![ConditionKind::PoiDifferentiable],
        lexicon: None,
        data: DataPaths {
            train: data,
            validation: None,
            vocabulary: None,
        },
        model: ModelSettings {
            d_model: 8,
            num_heads: 2,
            num_layers: 1,
            max_seq_len: 24,
            max_memory_len: 8,
            ..ModelSettings::default()
        },
        optimizer: adam(3e-3),
        weights: WeightSettings {
            standard: 1.0,
            adversarial: 0.1,
            conditions: Some(vec![0.5]),
        },
    };
    let second = RunConfig {
        output_dir: dir.path().join("run-b"),
        ..base.clone()
    };
    memgat_cli::cmd_train(&base).map_err(err)?;
    memgat_cli::cmd_train(&second).map_err(err)?;
    let a = fs::read(base.output_dir.join("metrics.jsonl")).map_err(err)?;
    let b = fs::read(second.output_dir.join("metrics.jsonl")).map_err(err)?;
    let lines = String::from_utf8_lossy(&a).lines().count();
    Ok((
        a == b && lines == 3,
        format!("{lines} epoch lines, {} bytes, identical: {}", a.len(), a == b),
    ))
}

fn main() {
    let criteria: [(&str, fn() -> Check); 10] = [
        ("gradient fidelity", gradient_fidelity),
        ("empty-memory equivalence", empty_memory),
        ("POI loss oracle", poi_oracle),
        ("metric oracles", metric_oracle),
        ("overfit capability", overfit),
        ("adversarial sanity", adversarial_sanity),
        ("memory-ablation direction", memory_ablation),
        ("condition-loss direction", condition_direction),
        ("pipeline oracle", pipeline_oracle),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let (pass, detail) = run().unwrap_or_else(|e| (false, format!("error: {e}")));
        failed += !pass as usize;
        println!("{} {:>2} {name}: {detail}", if pass { "PASS" } else { "FAIL" }, i + 1);
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
