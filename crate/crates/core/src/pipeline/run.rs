use serde::{Deserialize, Serialize};

use super::query::{construct_kb_query, resolve_query, KbQuery};
use crate::conditions::{extract_slot_names, SlotLexicon};
use crate::data::{attenuate, memory_tokens, tokenize, KbEntry, Superlatives, ValueTable, Vocabulary};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::transformer::MemoryAugmentedTransformer;

/// Answer returned when the question cannot be grounded in the KB.
pub const FALLBACK_ANSWER: &str = "sorry , i could not find that";

/// Anything that maps `(input ids, memory ids)` to output ids.
pub trait StageGenerator {
    fn vocab_size(&self) -> usize;
    fn max_input_len(&self) -> usize;
    fn max_memory_len(&self) -> usize;
    fn generate_ids(&self, input: &[usize], memory: &[usize], max_len: usize) -> Result<Vec<usize>>;
}

impl<T: Scalar> StageGenerator for MemoryAugmentedTransformer<T> {
    fn vocab_size(&self) -> usize {
        self.config().vocab_size
    }
    fn max_input_len(&self) -> usize {
        self.config().max_seq_len
    }
    fn max_memory_len(&self) -> usize {
        self.config().max_memory_len
    }
    fn generate_ids(&self, input: &[usize], memory: &[usize], max_len: usize) -> Result<Vec<usize>> {
        self.try_generate(input, memory, max_len)
    }
}

/// Three independently trained stage models over one vocabulary.
#[derive(Clone, Debug)]
pub struct StageModels<G> {
    pub detection: G,
    pub mapping: G,
    pub filling: G,
    pub vocabulary: Vocabulary,
}

impl<G: StageGenerator> StageModels<G> {
    pub fn new(detection: G, mapping: G, filling: G, vocabulary: Vocabulary) -> Result<Self> {
        for (name, m) in [("stage 1", &detection), ("stage 2", &mapping), ("stage 3", &filling)] {
            if m.vocab_size() != vocabulary.len() {
                return Err(Error::Compatibility(format!(
                    "{name} model has vocabulary size {} but the shared vocabulary has {}",
                    m.vocab_size(),
                    vocabulary.len()
                )));
            }
        }
        Ok(Self {
            detection,
            mapping,
            filling,
            vocabulary,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PipelineConfig {
    pub lexicon: SlotLexicon,
    pub superlatives: Superlatives,
    /// Generation cap per stage.
    pub max_len: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            lexicon: SlotLexicon::car(),
            superlatives: Superlatives::default(),
            max_len: 32,
        }
    }
}

/// Every intermediate artifact of one pipeline run.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PipelineTrace {
    pub question: String,
    pub stage1: Option<String>,
    pub query: Option<KbQuery>,
    pub resolution: Option<Vec<String>>,
    pub stage2: Option<String>,
    pub stage3: Option<String>,
    /// Query or resolution failure that triggered the fallback.
    pub error: Option<String>,
}

impl PipelineTrace {
    /// Number of intermediate artifacts recorded.
    pub fn len(&self) -> usize {
        [
            self.stage1.is_some(),
            self.query.is_some(),
            self.resolution.is_some(),
            self.stage2.is_some(),
            self.stage3.is_some(),
        ]
        .iter()
        .filter(|&&b| b)
        .count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineAnswer {
    pub answer: String,
    pub fallback: bool,
    pub trace: PipelineTrace,
}

fn run_stage<G: StageGenerator>(
    model: &G,
    vocab: &Vocabulary,
    input: &[String],
    memory: &[String],
    max_len: usize,
) -> Result<Vec<String>> {
    let (mut ids, _) = vocab.encode(input);
    ids.truncate(model.max_input_len());
    if ids.is_empty() {
        return Ok(Vec::new());
    }
    let (mut mem, _) = vocab.encode(&memory_tokens(memory));
    mem.truncate(model.max_memory_len());
    let out = model.generate_ids(&ids, &mem, max_len)?;
    Ok(vocab.decode(&out))
}

/// Aligned spans of the raw question restricted to the slots that the
/// stage-1 output names. Training-time alignment comes from the KB; at
/// inference the question is re-matched against the scenario's values.
pub fn recover_alignment(
    question: &str,
    stage1_tokens: &[String],
    entries: &[KbEntry],
    config: &PipelineConfig,
) -> Vec<crate::data::AlignedSpan> {
    let detected = extract_slot_names(stage1_tokens, &config.lexicon);
    let table = ValueTable::for_scenario(entries, &config.superlatives);
    attenuate(question, &table)
        .alignment
        .into_iter()
        .filter(|span| detected.contains(&span.slot))
        .collect()
}

/// Slot detection, KB resolution, slot mapping and slot filling for one
/// question against one scenario's entries. Query and resolution failures
/// give [`FALLBACK_ANSWER`] with the failure recorded in the trace; model
/// errors propagate.
pub fn run_three_stage<G: StageGenerator>(
    question: &str,
    entries: &[KbEntry],
    models: &StageModels<G>,
    config: &PipelineConfig,
) -> Result<PipelineAnswer> {
    let vocab = &models.vocabulary;
    let mut trace = PipelineTrace {
        question: question.to_string(),
        ..PipelineTrace::default()
    };
    let fallback = |mut trace: PipelineTrace, e: Error| {
        trace.error = Some(e.to_string());
        Ok(PipelineAnswer {
            answer: FALLBACK_ANSWER.to_string(),
            fallback: true,
            trace,
        })
    };

    let s1 = run_stage(&models.detection, vocab, &tokenize(question), &[], config.max_len)?;
    trace.stage1 = Some(crate::data::detokenize(&s1));

    let alignment = recover_alignment(question, &s1, entries, config);
    let query = match construct_kb_query(&alignment, &config.superlatives) {
        Ok(q) => q,
        Err(e) => return fallback(trace, e),
    };
    trace.query = Some(query.clone());
    let resolution = match resolve_query(&query, entries) {
        Ok(r) => r,
        Err(e) => return fallback(trace, e),
    };
    let items = resolution.memory_items();
    trace.resolution = Some(items.clone());

    let emphasis = config.lexicon.order(extract_slot_names(&s1, &config.lexicon));
    let s2 = run_stage(&models.mapping, vocab, &s1, &emphasis, config.max_len)?;
    trace.stage2 = Some(crate::data::detokenize(&s2));

    let s3 = run_stage(&models.filling, vocab, &s2, &items, config.max_len)?;
    let answer = crate::data::detokenize(&s3);
    trace.stage3 = Some(answer.clone());
    Ok(PipelineAnswer {
        answer,
        fallback: false,
        trace,
    })
}
