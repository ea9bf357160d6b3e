//! String-overlap metrics over whitespace-tokenized sentences, slot-answer
//! accuracy and paired-bootstrap significance.

mod bleu;
mod bootstrap;
mod chrf;
mod report;
mod rouge;
mod ter;

pub use bleu::{bleu, BleuScore, BLEU_SMOOTHING_EPSILON};
pub use bootstrap::{paired_bootstrap, paired_bootstrap_indexed, BootstrapResult, MIN_RESAMPLES};
pub use chrf::{chrf, corpus_chrf, ChrfConfig};
pub use report::{Comparison, Metric, MetricSuite, MetricsReport};
pub use rouge::{corpus_rouge_l, lcs_len, rouge_l, RougeScore};
pub use ter::{
    corpus_ter, edit_distance, perturbed_pair, ter, ter_edits, ter_exact, ter_greedy, ShiftSearch, TerEdits, EXACT_MAX_CANDIDATE,
    EXACT_MAX_REFERENCE, MAX_SHIFT_DISTANCE, MAX_SHIFT_SIZE,
};

use crate::conditions::{extract_slot_names, SlotLexicon};
use crate::error::{Error, Result};

pub(crate) fn words(s: &str) -> Vec<&str> {
    s.split_whitespace().collect()
}

/// Share of pairs whose slot-name sets are equal.
pub fn slot_answer_accuracy<C: AsRef<str>, R: AsRef<str>>(
    predictions: &[C],
    golds: &[R],
    lexicon: &SlotLexicon,
) -> Result<f64> {
    if predictions.is_empty() {
        return Err(Error::DegenerateBatch("empty corpus or sentence".into()));
    }
    if predictions.len() != golds.len() {
        return Err(Error::Alignment("prediction and gold counts differ".into()));
    }
    let hits = predictions
        .iter()
        .zip(golds)
        .filter(|(p, g)| extract_slot_names(&words(p.as_ref()), lexicon) == extract_slot_names(&words(g.as_ref()), lexicon))
        .count();
    Ok(hits as f64 / predictions.len() as f64)
}

#[cfg(test)]
mod tests;
