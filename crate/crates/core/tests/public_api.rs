use memgat::adversarial::{seq2seq_train_step, teacher_forced_accuracy};
use memgat::conditions::SlotLexicon;
use memgat::data::synth::{generate_car_corpus, CarSynthConfig};
use memgat::data::{
    attenuate, build_stage_datasets, detokenize, encode_turn, load_turns, tokenize, write_jsonl, DialogueTurn,
    EncodeLimits, EncodedTurn, KnowledgeBase, Superlatives, ValueTable, Vocabulary,
};
use memgat::evaluation::{bleu, ter};
use memgat::pipeline::{construct_kb_query, fill_slots_deterministic, resolve_query};
use memgat::tensor::{AdamConfig, AdamState, Parameterized};
use memgat::transformer::{Checkpoint, ModelConfig};
use memgat::{Error, Transformer32, Transformer64};

fn stage1_sample(n: usize) -> (Vec<DialogueTurn>, Vocabulary) {
    let corpus = generate_car_corpus(&CarSynthConfig::default()).unwrap();
    let d = build_stage_datasets(&corpus.raw, &corpus.kb, &SlotLexicon::car(), &Superlatives::default()).unwrap();
    let rows = d.stage1[..n].to_vec();
    let vocab = Vocabulary::build(rows.iter().flat_map(|t| t.all_tokens()));
    (rows, vocab)
}

fn encoded(rows: &[DialogueTurn], vocab: &Vocabulary) -> Vec<EncodedTurn> {
    let limits = EncodeLimits {
        max_seq_len: 24,
        max_memory_len: 8,
    };
    rows.iter().map(|t| encode_turn(t, vocab, limits)).collect()
}

fn config(vocab: usize) -> ModelConfig {
    let mut c = ModelConfig::tiny(vocab, 16, 2, 1);
    c.max_seq_len = 24;
    c.max_memory_len = 8;
    c
}

#[test]
fn single_precision_model_learns() {
    let (rows, vocab) = stage1_sample(8);
    let enc = encoded(&rows, &vocab);
    let mut m = Transformer32::new(config(vocab.len()), 2).unwrap();
    let mut opt = AdamState::new(
        AdamConfig {
            lr: 1e-2,
            ..AdamConfig::default()
        },
        m.params(),
    );
    let first = seq2seq_train_step(&mut m, &mut opt, &enc).unwrap();
    let mut last = first;
    for _ in 0..60 {
        last = seq2seq_train_step(&mut m, &mut opt, &enc).unwrap();
    }
    assert!(last.is_finite() && last < 0.5 * first, "{first} -> {last}");
    assert!(teacher_forced_accuracy(&m, &enc).unwrap() > 0.5);
}

#[test]
fn checkpoint_round_trip_preserves_generation() {
    let (rows, vocab) = stage1_sample(4);
    let enc = encoded(&rows, &vocab);
    let m = Transformer64::new(config(vocab.len()), 9).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("gen.json");
    Checkpoint::capture("generator", m.config(), vocab.tokens().to_vec(), &m).save(&path).unwrap();

    let back = Checkpoint::load(&path).unwrap();
    assert_eq!(back.vocabulary, vocab.tokens());
    let restored: Transformer64 = back.to_transformer().unwrap();
    for e in &enc {
        assert_eq!(m.generate(&e.input, &e.memory, 12), restored.generate(&e.input, &e.memory, 12));
    }

    std::fs::write(&path, "{\"format_version\":").unwrap();
    assert!(matches!(Checkpoint::load(&path), Err(Error::Compatibility(_))));
}

#[test]
fn corpus_files_round_trip() {
    let corpus = generate_car_corpus(&CarSynthConfig::default()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let kb_path = dir.path().join("kb.jsonl");
    corpus.kb.save(&kb_path).unwrap();
    assert_eq!(KnowledgeBase::load(&kb_path).unwrap(), corpus.kb);

    let d = build_stage_datasets(&corpus.raw, &corpus.kb, &SlotLexicon::car(), &Superlatives::default()).unwrap();
    let turns_path = dir.path().join("stage3.jsonl");
    write_jsonl(&turns_path, &d.stage3).unwrap();
    assert_eq!(load_turns(&turns_path).unwrap(), d.stage3);
}

#[test]
fn resolved_memory_fills_every_answer_template() {
    let corpus = generate_car_corpus(&CarSynthConfig::default()).unwrap();
    let sup = Superlatives::default();
    let lexicon = SlotLexicon::car();
    for r in &corpus.raw {
        let entries = corpus.kb.entries(&r.scenario);
        let table = ValueTable::for_scenario(entries, &sup);
        let query = construct_kb_query(&attenuate(&r.question, &table).alignment, &sup).unwrap();
        let resolution = resolve_query(&query, entries).unwrap();
        let template = tokenize(&attenuate(&r.answer, &table).text());
        let filled = fill_slots_deterministic(&template, &resolution.memory_items(), lexicon.names());
        let want = detokenize(&tokenize(&r.answer));
        assert_eq!(filled.text(), want, "{}", r.question);
        assert_eq!(bleu(&[filled.text()], &[want.clone()], 4).unwrap().score, 100.0);
        assert_eq!(ter(&filled.text(), &want).unwrap(), 0.0);
    }
}
