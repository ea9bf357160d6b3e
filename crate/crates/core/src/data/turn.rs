use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{de::DeserializeOwned, Deserialize, Serialize};

use super::tokenize::{memory_tokens, split_item, tokenize};
use super::vocab::{Vocabulary, BOS_ID, EOS_ID};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Stage {
    #[serde(rename = "1")]
    SlotDetection,
    #[serde(rename = "2")]
    SlotMapping,
    #[serde(rename = "3")]
    SlotFilling,
    #[serde(rename = "style")]
    Style,
}

/// One training triple.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DialogueTurn {
    pub input: String,
    /// Bare slot names or `name:value` items.
    #[serde(default)]
    pub memory: Vec<String>,
    pub target: String,
    pub stage: Stage,
    #[serde(default)]
    pub scenario: String,
}

impl DialogueTurn {
    pub fn new(input: impl Into<String>, memory: Vec<String>, target: impl Into<String>, stage: Stage) -> Self {
        Self {
            input: input.into(),
            memory,
            target: target.into(),
            stage,
            scenario: String::new(),
        }
    }

    pub fn with_scenario(mut self, scenario: impl Into<String>) -> Self {
        self.scenario = scenario.into();
        self
    }

    /// Stage-specific shape constraints on the memory list.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Error::Ingestion {
            index: 0,
            message: m.to_string(),
        };
        match self.stage {
            Stage::SlotDetection if !self.memory.is_empty() => Err(bad("stage-1 turns carry no memory")),
            Stage::SlotFilling if self.memory.iter().any(|m| split_item(m).1.is_none()) => {
                Err(bad("stage-3 memory items must be name:value"))
            }
            _ => Ok(()),
        }
    }

    pub fn all_tokens(&self) -> impl Iterator<Item = String> {
        tokenize(&self.input)
            .into_iter()
            .chain(memory_tokens(&self.memory))
            .chain(tokenize(&self.target))
    }
}

/// Sequence-length caps applied by [`encode_turn`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EncodeLimits {
    pub max_seq_len: usize,
    pub max_memory_len: usize,
}

/// Id form of a turn. `target` is wrapped as `bos … eos`.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct EncodedTurn {
    pub input: Vec<usize>,
    pub memory: Vec<usize>,
    pub target: Vec<usize>,
    pub unknown: usize,
    pub truncated: usize,
}

impl EncodedTurn {
    /// Decoder input: `bos` plus the target tokens.
    pub fn decoder_input(&self) -> &[usize] {
        &self.target[..self.target.len() - 1]
    }

    /// Labels aligned with [`decoder_input`](Self::decoder_input): tokens plus `eos`.
    pub fn labels(&self) -> &[usize] {
        &self.target[1..]
    }

    pub fn without_memory(mut self) -> Self {
        self.memory.clear();
        self
    }
}

/// Maps a turn to ids. Unknown tokens become `<unk>` and sequences over the
/// caps are truncated; both are counted.
pub fn encode_turn(turn: &DialogueTurn, vocab: &Vocabulary, limits: EncodeLimits) -> EncodedTurn {
    let mut truncated = 0;
    let mut cap = |mut v: Vec<usize>, n: usize| {
        if v.len() > n {
            v.truncate(n);
            truncated += 1;
        }
        v
    };
    let (input, u1) = vocab.encode(&tokenize(&turn.input));
    let (memory, u2) = vocab.encode(&memory_tokens(&turn.memory));
    let (body, u3) = vocab.encode(&tokenize(&turn.target));
    let input = cap(input, limits.max_seq_len);
    let memory = cap(memory, limits.max_memory_len);
    let body = cap(body, limits.max_seq_len.saturating_sub(1));
    let mut target = Vec::with_capacity(body.len() + 2);
    target.push(BOS_ID);
    target.extend(body);
    target.push(EOS_ID);
    EncodedTurn {
        input,
        memory,
        target,
        unknown: u1 + u2 + u3,
        truncated,
    }
}

/// Reads line-delimited JSON records, skipping blank lines.
pub fn read_jsonl<R: DeserializeOwned>(path: impl AsRef<Path>) -> Result<Vec<R>> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (index, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line).map_err(|e| Error::Ingestion {
            index,
            message: format!("{}: {e}", path.display()),
        })?;
        out.push(record);
    }
    Ok(out)
}

pub fn write_jsonl<R: Serialize>(path: impl AsRef<Path>, records: &[R]) -> Result<()> {
    let path = path.as_ref();
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    for r in records {
        let line = serde_json::to_string(r)?;
        writeln!(file, "{line}").map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

/// Loads a turn corpus and checks the per-stage memory constraints.
pub fn load_turns(path: impl AsRef<Path>) -> Result<Vec<DialogueTurn>> {
    let turns: Vec<DialogueTurn> = read_jsonl(path)?;
    for (index, t) in turns.iter().enumerate() {
        t.validate().map_err(|e| match e {
            Error::Ingestion { message, .. } => Error::Ingestion { index, message },
            other => other,
        })?;
    }
    Ok(turns)
}
