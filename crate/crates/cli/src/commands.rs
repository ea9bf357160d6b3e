use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use memgat::adversarial::{train, write_metrics_line, GatModel, TrainerConfig};
use memgat::conditions::SlotLexicon;
use memgat::data::synth::{generate_car_corpus, generate_style_corpus, style_corpus_tsv, CarSynthConfig};
use memgat::data::{
    build_stage_datasets, detokenize, encode_turn, load_style_corpus, load_turns, memory_tokens, read_jsonl,
    tokenize, write_jsonl, DialogueTurn, EncodeLimits, EncodedTurn, KnowledgeBase, RawTurn, Stage, Superlatives,
    Vocabulary,
};
use memgat::evaluation::{MetricSuite, MetricsReport};
use memgat::pipeline::{run_three_stage, PipelineAnswer, PipelineConfig, StageModels};
use memgat::transformer::{Checkpoint, MemoryAugmentedTransformer};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};

/// Share of unknown tokens above which test data is rejected.
pub const MAX_OOV_RATE: f64 = 0.5;

fn data_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Data(format!("{}: {e}", path.display()))
}

fn create_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| data_err(dir, e))
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| data_err(path, e))
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    version: &'a str,
    files: Vec<String>,
}

fn write_manifest(dir: &Path, command: &str, files: &[&str]) -> CliResult<()> {
    let m = Manifest {
        command,
        version: env!("CARGO_PKG_VERSION"),
        files: files.iter().map(|f| f.to_string()).collect(),
    };
    let text = serde_json::to_string_pretty(&m).expect("manifest serializes");
    write_text(&dir.join("manifest.json"), &text)
}

/// Turns from a `.tsv` style corpus or a JSONL file.
pub fn load_dataset(path: &Path) -> CliResult<Vec<DialogueTurn>> {
    let turns = if path.extension().is_some_and(|e| e == "tsv") {
        load_style_corpus(path)?
    } else {
        load_turns(path)?
    };
    Ok(turns)
}

pub fn read_vocabulary(path: &Path) -> CliResult<Vocabulary> {
    let text = fs::read_to_string(path).map_err(|e| data_err(path, e))?;
    Ok(Vocabulary::from_tokens(text.lines().map(String::from).collect())?)
}

pub fn write_vocabulary(path: &Path, vocab: &Vocabulary) -> CliResult<()> {
    write_text(path, &(vocab.tokens().join("\n") + "\n"))
}

fn load_lexicon(path: Option<&PathBuf>) -> CliResult<SlotLexicon> {
    Ok(match path {
        Some(p) => SlotLexicon::load(p)?,
        None => SlotLexicon::car(),
    })
}

#[derive(Clone, Debug)]
pub struct SynthArgs {
    pub out: PathBuf,
    pub car: CarSynthConfig,
    pub style_turns: usize,
}

/// Writes `raw.jsonl`, `kb.jsonl` and `style.tsv`.
pub fn cmd_synth(args: &SynthArgs) -> CliResult<()> {
    create_dir(&args.out)?;
    let corpus = generate_car_corpus(&args.car)?;
    write_jsonl(args.out.join("raw.jsonl"), &corpus.raw)?;
    corpus.kb.save(args.out.join("kb.jsonl"))?;
    let style = generate_style_corpus(args.style_turns, args.car.seed)?;
    write_text(&args.out.join("style.tsv"), &style_corpus_tsv(&style))?;
    write_manifest(&args.out, "synth", &["raw.jsonl", "kb.jsonl", "style.tsv"])
}

/// Builds the three stage files, a shared vocabulary and a quality report.
pub fn cmd_prepare(raw: &Path, kb: &Path, out: &Path, lexicon: Option<&PathBuf>) -> CliResult<[usize; 3]> {
    let kb = KnowledgeBase::load(kb)?;
    let raw: Vec<RawTurn> = read_jsonl(raw)?;
    if raw.is_empty() {
        return Err(memgat::Error::DegenerateBatch("raw corpus has no records".into()).into());
    }
    let lexicon = load_lexicon(lexicon)?;
    let d = build_stage_datasets(&raw, &kb, &lexicon, &Superlatives::default())?;
    create_dir(out)?;
    write_jsonl(out.join("stage1.jsonl"), &d.stage1)?;
    write_jsonl(out.join("stage2.jsonl"), &d.stage2)?;
    write_jsonl(out.join("stage3.jsonl"), &d.stage3)?;
    let vocab = Vocabulary::build(d.stage1.iter().chain(&d.stage2).chain(&d.stage3).flat_map(|t| t.all_tokens()));
    write_vocabulary(&out.join("vocab.txt"), &vocab)?;
    let report = serde_json::to_string_pretty(&d.report).expect("report serializes");
    write_text(&out.join("quality.json"), &report)?;
    write_manifest(
        out,
        "prepare",
        &["stage1.jsonl", "stage2.jsonl", "stage3.jsonl", "vocab.txt", "quality.json"],
    )?;
    Ok([d.stage1.len(), d.stage2.len(), d.stage3.len()])
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

#[derive(Clone, Debug, PartialEq)]
pub struct TrainSummary {
    pub run_dir: PathBuf,
    pub epochs: usize,
    pub best_epoch: usize,
    pub final_standard_loss: f64,
}

/// Trains one generator/discriminator pair. The run directory receives the
/// config echo, the vocabulary, `metrics.jsonl`, `best.json`, `final.json`,
/// `discriminator.json` and a manifest.
pub fn cmd_train(cfg: &RunConfig) -> CliResult<TrainSummary> {
    cfg.validate()?;
    let train_set = load_dataset(&cfg.data.train)?;
    if train_set.is_empty() {
        return Err(CliError::Data(format!("{} has no training rows", cfg.data.train.display())));
    }
    let validation = match &cfg.data.validation {
        Some(p) => load_dataset(p)?,
        None => Vec::new(),
    };
    let vocab = match &cfg.data.vocabulary {
        Some(p) => read_vocabulary(p)?,
        None => Vocabulary::build(train_set.iter().chain(&validation).flat_map(|t| t.all_tokens())),
    };
    let lexicon = load_lexicon(cfg.lexicon.as_ref())?;
    let model_cfg = cfg.model_config(vocab.len());
    model_cfg.validate().map_err(|e| CliError::config("model", e.to_string()))?;
    let limits = EncodeLimits {
        max_seq_len: model_cfg.max_seq_len,
        max_memory_len: model_cfg.max_memory_len,
    };
    let enc_train = encode_all(&train_set, &vocab, limits, cfg.ablate_memory);
    let enc_valid = encode_all(&validation, &vocab, limits, cfg.ablate_memory);
    let conditions = cfg.conditions.iter().map(|c| c.build::<f64>(&lexicon, &vocab)).collect();
    let mut model = GatModel::<f64>::from_config(model_cfg, cfg.seed, cfg.optimizer, conditions, cfg.loss_weights())?;
    model.objective = cfg.objective;

    let dir = &cfg.output_dir;
    create_dir(dir)?;
    write_text(&dir.join("config.toml"), &cfg.to_toml())?;
    write_vocabulary(&dir.join("vocab.txt"), &vocab)?;
    let log_path = dir.join("metrics.jsonl");
    let mut log = BufWriter::new(File::create(&log_path).map_err(|e| data_err(&log_path, e))?);
    let trainer = TrainerConfig {
        epochs: cfg.epochs,
        batch_size: cfg.batch_size,
        seed: cfg.seed,
        shuffle: true,
    };
    let outcome = train(&mut model, &enc_train, &enc_valid, &trainer, |r| {
        write_metrics_line(&mut log, r)?;
        log.flush().map_err(|e| memgat::Error::Protocol(format!("metrics log: {e}")))
    })?;
    drop(log);

    let tokens = vocab.tokens().to_vec();
    let best = &outcome.best_generator;
    Checkpoint::capture("generator", best.config(), tokens.clone(), best).save(dir.join("best.json"))?;
    Checkpoint::capture("generator", model.generator.config(), tokens.clone(), &model.generator)
        .save(dir.join("final.json"))?;
    model.discriminator.to_checkpoint(tokens).save(dir.join("discriminator.json"))?;
    write_manifest(
        dir,
        "train",
        &[
            "config.toml",
            "vocab.txt",
            "metrics.jsonl",
            "best.json",
            "final.json",
            "discriminator.json",
        ],
    )?;
    Ok(TrainSummary {
        run_dir: dir.clone(),
        epochs: outcome.records.len(),
        best_epoch: outcome.best_epoch,
        final_standard_loss: outcome.records.last().map_or(f64::NAN, |r| r.standard_loss),
    })
}

/// Generator plus the vocabulary stored with it.
pub fn load_generator(path: &Path) -> CliResult<(MemoryAugmentedTransformer<f64>, Vocabulary)> {
    let ckpt = Checkpoint::load(path)?;
    if ckpt.vocabulary.is_empty() {
        return Err(memgat::Error::Compatibility(format!("{} carries no vocabulary", path.display())).into());
    }
    let vocab = Vocabulary::from_tokens(ckpt.vocabulary.clone())?;
    Ok((ckpt.to_transformer()?, vocab))
}

/// Greedy output text for one input and memory.
pub fn generate_text(
    model: &MemoryAugmentedTransformer<f64>,
    vocab: &Vocabulary,
    input: &str,
    memory: &[String],
    max_len: usize,
) -> CliResult<String> {
    let cfg = model.config();
    let (mut ids, _) = vocab.encode(&tokenize(input));
    ids.truncate(cfg.max_seq_len);
    if ids.is_empty() {
        return Err(CliError::Data("input has no tokens".into()));
    }
    let (mut mem, _) = vocab.encode(&memory_tokens(memory));
    mem.truncate(cfg.max_memory_len);
    let out = model.try_generate(&ids, &mem, max_len)?;
    Ok(detokenize(&vocab.decode(&out)))
}

pub fn cmd_generate(checkpoint: &Path, input: &str, memory: &[String], max_len: usize) -> CliResult<String> {
    let (model, vocab) = load_generator(checkpoint)?;
    generate_text(&model, &vocab, input, memory, max_len)
}

#[derive(Clone, Debug)]
pub struct EvaluateArgs {
    pub checkpoint: PathBuf,
    pub test: PathBuf,
    /// One prediction per line, aligned with the test rows.
    pub baseline: Option<PathBuf>,
    pub out: PathBuf,
    pub ablate_memory: bool,
    pub max_len: usize,
}

/// Scores greedy generations on a test file; writes `predictions.txt`,
/// `report.json` and a manifest.
pub fn cmd_evaluate(args: &EvaluateArgs) -> CliResult<MetricsReport> {
    let (model, vocab) = load_generator(&args.checkpoint)?;
    let test = load_dataset(&args.test)?;
    if test.is_empty() {
        return Err(CliError::Data(format!("{} has no rows", args.test.display())));
    }
    let tokens: Vec<String> = test.iter().flat_map(|t| t.all_tokens()).collect();
    let oov = vocab.oov_rate(&tokens);
    if oov > MAX_OOV_RATE {
        return Err(memgat::Error::Compatibility(format!(
            "{:.0}% of test tokens are outside the checkpoint vocabulary",
            100.0 * oov
        ))
        .into());
    }
    let mut predictions = Vec::with_capacity(test.len());
    for t in &test {
        let memory = if args.ablate_memory { &[][..] } else { &t.memory[..] };
        predictions.push(generate_text(&model, &vocab, &t.input, memory, args.max_len)?);
    }
    let references: Vec<String> = test.iter().map(|t| detokenize(&tokenize(&t.target))).collect();
    let car = test.iter().any(|t| t.stage != Stage::Style);
    let suite = MetricSuite {
        lexicon: car.then(SlotLexicon::car),
        ..MetricSuite::default()
    };
    let mut report = suite.report("model", &predictions, &references)?;
    if let Some(path) = &args.baseline {
        let text = fs::read_to_string(path).map_err(|e| data_err(path, e))?;
        let baseline: Vec<String> = text.lines().map(|l| detokenize(&tokenize(l))).collect();
        suite.compare(&mut report, "baseline", &predictions, &baseline, &references)?;
    }
    create_dir(&args.out)?;
    write_text(&args.out.join("predictions.txt"), &(predictions.join("\n") + "\n"))?;
    report.save(args.out.join("report.json"))?;
    write_manifest(&args.out, "evaluate", &["predictions.txt", "report.json"])?;
    Ok(report)
}

/// One line of a pipeline questions file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuestionRecord {
    pub scenario: String,
    pub question: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer: Option<String>,
}

#[derive(Serialize)]
struct TraceLine<'a> {
    scenario: &'a str,
    #[serde(flatten)]
    result: &'a PipelineAnswer,
    #[serde(skip_serializing_if = "Option::is_none")]
    exact_match: Option<bool>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PipelineSummary {
    pub questions: usize,
    pub fallbacks: usize,
    /// Exact matches among questions that carry an answer.
    pub exact: usize,
    pub with_answer: usize,
}

#[derive(Clone, Debug)]
pub struct PipelineArgs {
    pub stages: [PathBuf; 3],
    pub kb: PathBuf,
    pub questions: PathBuf,
    pub out: PathBuf,
    pub max_len: usize,
}

/// Answers every question and writes one trace per line to `traces.jsonl`.
pub fn cmd_pipeline(args: &PipelineArgs) -> CliResult<PipelineSummary> {
    let [a, b, c] = &args.stages;
    let (s1, v1) = load_generator(a)?;
    let (s2, v2) = load_generator(b)?;
    let (s3, v3) = load_generator(c)?;
    if v1 != v2 || v1 != v3 {
        return Err(memgat::Error::Compatibility("stage checkpoints use different vocabularies".into()).into());
    }
    let models = StageModels::new(s1, s2, s3, v1)?;
    let kb = KnowledgeBase::load(&args.kb)?;
    let questions: Vec<QuestionRecord> = read_jsonl(&args.questions)?;
    let config = PipelineConfig {
        max_len: args.max_len,
        ..PipelineConfig::default()
    };
    create_dir(&args.out)?;
    let path = args.out.join("traces.jsonl");
    let mut out = BufWriter::new(File::create(&path).map_err(|e| data_err(&path, e))?);
    let mut summary = PipelineSummary {
        questions: questions.len(),
        fallbacks: 0,
        exact: 0,
        with_answer: 0,
    };
    for q in &questions {
        let result = run_three_stage(&q.question, kb.entries(&q.scenario), &models, &config)?;
        let exact_match = q.answer.as_ref().map(|a| detokenize(&tokenize(a)) == result.answer);
        summary.fallbacks += result.fallback as usize;
        summary.with_answer += exact_match.is_some() as usize;
        summary.exact += (exact_match == Some(true)) as usize;
        let line = TraceLine {
            scenario: &q.scenario,
            result: &result,
            exact_match,
        };
        let text = serde_json::to_string(&line).map_err(memgat::Error::from)?;
        writeln!(out, "{text}").map_err(|e| data_err(&path, e))?;
    }
    out.flush().map_err(|e| data_err(&path, e))?;
    write_manifest(&args.out, "pipeline", &["traces.jsonl"])?;
    Ok(summary)
}
