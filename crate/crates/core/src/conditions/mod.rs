//! Generator condition losses. Every loss here is a set-level penalty over
//! slot-name tokens; the zero condition is the additive identity.

use std::collections::BTreeSet;
use std::fmt::Debug;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{tokenize, Vocabulary, COLON, ITEM_SEPARATOR};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{Graph, Var};

const CAR_SLOTS: [&str; 10] = [
    "poitype",
    "poidistance",
    "poi",
    "poiaddress",
    "poievent",
    "poidate",
    "poitime",
    "poiparty",
    "poiagenda",
    "poitrafficinfo",
];

/// Ordered set of slot-name tokens.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotLexicon {
    names: Vec<String>,
}

impl SlotLexicon {
    pub fn new<I, S>(names: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut out: Vec<String> = Vec::new();
        for name in names {
            let name = name.into();
            if tokenize(&name) != [name.clone()] {
                return Err(Error::Config(format!("slot name `{name}` is not a single lowercase token")));
            }
            if out.contains(&name) {
                return Err(Error::Config(format!("slot name `{name}` listed twice")));
            }
            out.push(name);
        }
        if out.is_empty() {
            return Err(Error::Config("slot lexicon is empty".into()));
        }
        Ok(Self { names: out })
    }

    /// The in-car assistant slot inventory.
    pub fn car() -> Self {
        Self::new(CAR_SLOTS).expect("valid built-in lexicon")
    }

    /// One slot name per line; blank lines are ignored.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::new(text.lines().map(str::trim).filter(|l| !l.is_empty()).map(String::from))
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn contains(&self, token: &str) -> bool {
        self.names.iter().any(|n| n == token)
    }

    /// Deduplicates `slots` and puts them in lexicon order; names outside the
    /// lexicon follow in first-seen order.
    pub fn order<I, S>(&self, slots: I) -> Vec<String>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut seen: Vec<String> = Vec::new();
        for s in slots {
            if !seen.iter().any(|x| x == s.as_ref()) {
                seen.push(s.as_ref().to_string());
            }
        }
        let mut out: Vec<String> = self.names.iter().filter(|n| seen.contains(n)).cloned().collect();
        out.extend(seen.into_iter().filter(|s| !self.contains(s)));
        out
    }

    /// Vocabulary ids of the slot names and separators. Names missing from
    /// the vocabulary are dropped.
    pub fn ids(&self, vocab: &Vocabulary) -> LexiconIds {
        let mut slots: Vec<usize> = self.names.iter().filter_map(|n| vocab.get(n)).collect();
        slots.sort_unstable();
        LexiconIds {
            slots,
            colon: vocab.get(COLON),
            separator: vocab.get(ITEM_SEPARATOR),
        }
    }
}

/// Id-level view of a [`SlotLexicon`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LexiconIds {
    /// Sorted.
    pub slots: Vec<usize>,
    pub colon: Option<usize>,
    pub separator: Option<usize>,
}

impl LexiconIds {
    pub fn is_slot(&self, id: usize) -> bool {
        self.slots.binary_search(&id).is_ok()
    }
}

/// Slot tokens outside value positions. A value position runs from a colon
/// to the next item separator, so `name:value` items only contribute names.
fn extract<I: Copy + Ord>(seq: &[I], is_slot: impl Fn(I) -> bool, colon: Option<I>, sep: Option<I>) -> BTreeSet<I> {
    let mut out = BTreeSet::new();
    let mut in_value = false;
    for &t in seq {
        if Some(t) == colon {
            in_value = true;
        } else if Some(t) == sep {
            in_value = false;
        } else if !in_value && is_slot(t) {
            out.insert(t);
        }
    }
    out
}

pub fn extract_slot_names<S: AsRef<str>>(tokens: &[S], lexicon: &SlotLexicon) -> BTreeSet<String> {
    let refs: Vec<&str> = tokens.iter().map(AsRef::as_ref).collect();
    extract(&refs, |t| lexicon.contains(t), Some(COLON), Some(ITEM_SEPARATOR))
        .into_iter()
        .map(String::from)
        .collect()
}

pub fn extract_slot_ids(ids: &[usize], lexicon: &LexiconIds) -> BTreeSet<usize> {
    extract(ids, |t| lexicon.is_slot(t), lexicon.colon, lexicon.separator)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PoiScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Set precision/recall/F1 of predicted slot names against memory slot names.
/// Every 0/0 is 0.
pub fn poi_f1<K: Ord>(predicted: &BTreeSet<K>, memory: &BTreeSet<K>) -> PoiScores {
    let tp = predicted.intersection(memory).count();
    let fp = predicted.len() - tp;
    let fn_ = memory.len() - tp;
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    PoiScores { precision, recall, f1 }
}

fn loss_from_sets<K: Ord>(predicted: &BTreeSet<K>, memory: &BTreeSet<K>) -> f64 {
    if memory.is_empty() {
        0.0
    } else {
        1.0 - poi_f1(predicted, memory).f1
    }
}

/// `1 − F1` over slot-name sets; 0 when the memory names no slot.
pub fn poi_loss<A: AsRef<str>, B: AsRef<str>>(predicted: &[A], memory: &[B], lexicon: &SlotLexicon) -> f64 {
    let memory: Vec<&str> = memory.iter().map(AsRef::as_ref).collect();
    loss_from_sets(&extract_slot_names(predicted, lexicon), &extract_slot_names(&memory, lexicon))
}

pub fn poi_loss_ids(predicted: &[usize], memory: &[usize], lexicon: &LexiconIds) -> f64 {
    loss_from_sets(&extract_slot_ids(predicted, lexicon), &extract_slot_ids(memory, lexicon))
}

pub fn zero_condition() -> f64 {
    0.0
}

/// What a condition sees for one generated item.
pub struct ConditionInput<'a> {
    /// Teacher-forced logits, `T×V`.
    pub logits: Var,
    /// Greedy ids read off `logits`, cut at the first `eos`.
    pub predicted: &'a [usize],
    pub memory: &'a [usize],
}

/// A term added to the generator loss. Non-differentiable conditions record
/// their value as a graph constant.
pub trait ConditionLoss<T: Scalar>: Debug + Send + Sync {
    fn name(&self) -> &str;
    fn evaluate(&self, g: &mut Graph<T>, input: &ConditionInput<'_>) -> Result<Var>;
}

#[derive(Clone, Copy, Debug, Default)]
pub struct ZeroCondition;

impl<T: Scalar> ConditionLoss<T> for ZeroCondition {
    fn name(&self) -> &str {
        "zero"
    }
    fn evaluate(&self, g: &mut Graph<T>, _: &ConditionInput<'_>) -> Result<Var> {
        Ok(g.scalar_constant(T::zero()))
    }
}

/// Slot-name F1 penalty against the memory.
#[derive(Clone, Debug)]
pub struct PoiLoss {
    pub lexicon: LexiconIds,
    /// Replace the set F1 with a soft version whose slot presence is the
    /// largest softmax mass of the slot token over positions.
    pub differentiable: bool,
}

impl PoiLoss {
    fn soft<T: Scalar>(&self, g: &mut Graph<T>, logits: Var, memory: &BTreeSet<usize>) -> Result<Var> {
        let probs = g.softmax(logits, 1)?;
        let slots = &self.lexicon.slots;
        let selected = g.select_cols(probs, slots)?;
        let presence = g.max_rows(selected)?;
        let (inside, outside): (Vec<usize>, Vec<usize>) = (0..slots.len()).partition(|&i| memory.contains(&slots[i]));
        let tp = g.select_cols(presence, &inside)?;
        let tp = g.sum(tp);
        let mut denom = g.add_scalar(tp, T::of(memory.len() as f64));
        if !outside.is_empty() {
            let fp = g.select_cols(presence, &outside)?;
            let fp = g.sum(fp);
            denom = g.add(denom, fp)?;
        }
        let twice = g.scale(tp, T::of(2.0));
        let f1 = g.div(twice, denom)?;
        Ok(g.rsub_scalar(T::one(), f1))
    }
}

impl<T: Scalar> ConditionLoss<T> for PoiLoss {
    fn name(&self) -> &str {
        "poi"
    }

    fn evaluate(&self, g: &mut Graph<T>, input: &ConditionInput<'_>) -> Result<Var> {
        let memory = extract_slot_ids(input.memory, &self.lexicon);
        if memory.is_empty() {
            return Ok(g.scalar_constant(T::zero()));
        }
        if self.differentiable {
            let v = g.value(input.logits).dims2()?.1;
            if let Some(&bad) = self.lexicon.slots.iter().find(|&&s| s >= v) {
                return Err(Error::Vocabulary { id: bad, vocab_size: v });
            }
            return self.soft(g, input.logits, &memory);
        }
        let predicted = extract_slot_ids(input.predicted, &self.lexicon);
        Ok(g.scalar_constant(T::of(loss_from_sets(&predicted, &memory))))
    }
}

/// Serializable choice of condition.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConditionKind {
    Zero,
    Poi,
    PoiDifferentiable,
}

impl ConditionKind {
    pub fn build<T: Scalar>(self, lexicon: &SlotLexicon, vocab: &Vocabulary) -> Box<dyn ConditionLoss<T>> {
        match self {
            ConditionKind::Zero => Box::new(ZeroCondition),
            ConditionKind::Poi | ConditionKind::PoiDifferentiable => Box::new(PoiLoss {
                lexicon: lexicon.ids(vocab),
                differentiable: self == ConditionKind::PoiDifferentiable,
            }),
        }
    }
}
