use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{
    bleu, corpus_chrf, corpus_rouge_l, paired_bootstrap_indexed, slot_answer_accuracy, ter_edits, BootstrapResult,
    ChrfConfig, ShiftSearch,
};
use crate::conditions::SlotLexicon;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Bleu1,
    Bleu2,
    Bleu3,
    Bleu4,
    Chrf,
    Ter,
    RougeL,
    SlotAccuracy,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::Bleu1 => "bleu1",
            Metric::Bleu2 => "bleu2",
            Metric::Bleu3 => "bleu3",
            Metric::Bleu4 => "bleu4",
            Metric::Chrf => "chrf",
            Metric::Ter => "ter",
            Metric::RougeL => "rouge_l",
            Metric::SlotAccuracy => "slot_accuracy",
        }
    }
}

/// Metric settings shared by every system in one evaluation.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricSuite {
    pub chrf: ChrfConfig,
    pub rouge_beta: f64,
    pub ter_search: ShiftSearch,
    /// Enables slot accuracy.
    pub lexicon: Option<SlotLexicon>,
    pub resamples: usize,
    pub seed: u64,
}

impl Default for MetricSuite {
    fn default() -> Self {
        Self {
            chrf: ChrfConfig {
                word_order: 2,
                ..ChrfConfig::default()
            },
            rouge_beta: 1.0,
            ter_search: ShiftSearch::ExactWhenShort,
            lexicon: None,
            resamples: 1000,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub baseline: String,
    /// System minus baseline.
    pub deltas: BTreeMap<String, f64>,
    pub p_values: BTreeMap<String, f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub system: String,
    pub corpus: BTreeMap<String, f64>,
    /// Per-sentence BLEU-4, chrF, TER and ROUGE-L.
    pub sentences: Vec<BTreeMap<String, f64>>,
    pub comparison: Option<Comparison>,
    pub settings: BTreeMap<String, String>,
}

impl MetricsReport {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, serde_json::to_string_pretty(self)?).map_err(|e| Error::io(path, e))
    }
}

impl MetricSuite {
    pub fn metrics(&self) -> Vec<Metric> {
        let mut m = vec![
            Metric::Bleu1,
            Metric::Bleu2,
            Metric::Bleu3,
            Metric::Bleu4,
            Metric::Chrf,
            Metric::Ter,
            Metric::RougeL,
        ];
        if self.lexicon.is_some() {
            m.push(Metric::SlotAccuracy);
        }
        m
    }

    pub fn score<C: AsRef<str>, R: AsRef<str>>(&self, metric: Metric, candidates: &[C], references: &[R]) -> Result<f64> {
        match metric {
            Metric::Bleu1 => Ok(bleu(candidates, references, 1)?.score),
            Metric::Bleu2 => Ok(bleu(candidates, references, 2)?.score),
            Metric::Bleu3 => Ok(bleu(candidates, references, 3)?.score),
            Metric::Bleu4 => Ok(bleu(candidates, references, 4)?.score),
            Metric::Chrf => corpus_chrf(candidates, references, &self.chrf),
            Metric::Ter => super::corpus_ter(candidates, references, self.ter_search),
            Metric::RougeL => corpus_rouge_l(candidates, references, self.rouge_beta),
            Metric::SlotAccuracy => {
                let lex = self
                    .lexicon
                    .as_ref()
                    .ok_or_else(|| Error::Config("slot accuracy needs a slot lexicon".into()))?;
                slot_answer_accuracy(candidates, references, lex)
            }
        }
    }

    pub fn report<C: AsRef<str>, R: AsRef<str>>(&self, system: &str, candidates: &[C], references: &[R]) -> Result<MetricsReport> {
        let mut corpus = BTreeMap::new();
        for m in self.metrics() {
            corpus.insert(m.name().to_string(), self.score(m, candidates, references)?);
        }
        let mut sentences = Vec::with_capacity(candidates.len());
        for (c, r) in candidates.iter().zip(references) {
            let (c, r) = ([c.as_ref()], [r.as_ref()]);
            let mut row = BTreeMap::new();
            for m in [Metric::Bleu4, Metric::Chrf, Metric::Ter, Metric::RougeL] {
                row.insert(m.name().to_string(), self.score(m, &c, &r)?);
            }
            sentences.push(row);
        }
        let settings = BTreeMap::from([
            ("bleu_smoothing_epsilon".to_string(), super::BLEU_SMOOTHING_EPSILON.to_string()),
            (
                "chrf".to_string(),
                format!("char_order={} word_order={} beta={}", self.chrf.char_order, self.chrf.word_order, self.chrf.beta),
            ),
            ("rouge_beta".to_string(), self.rouge_beta.to_string()),
            ("ter_shift_search".to_string(), format!("{:?}", self.ter_search)),
        ]);
        Ok(MetricsReport {
            system: system.to_string(),
            corpus,
            sentences,
            comparison: None,
            settings,
        })
    }

    /// Adds a paired-bootstrap comparison of `system` against `baseline` on
    /// every metric.
    pub fn compare(
        &self,
        report: &mut MetricsReport,
        baseline: &str,
        system: &[String],
        baseline_outputs: &[String],
        references: &[String],
    ) -> Result<()> {
        let mut deltas = BTreeMap::new();
        let mut p_values = BTreeMap::new();
        let n = references.len();
        if system.len() != n || baseline_outputs.len() != n {
            return Err(Error::Alignment(format!(
                "system sizes {} and {} do not match {} references",
                system.len(),
                baseline_outputs.len(),
                n
            )));
        }
        for m in self.metrics() {
            let BootstrapResult { delta, p_value, .. } = if m == Metric::Ter {
                // Shift search dominates the cost, so edits are computed once.
                let edits = |sys: &[String]| -> Result<Vec<(usize, usize)>> {
                    sys.iter()
                        .zip(references)
                        .map(|(c, r)| ter_edits(c, r, self.ter_search).map(|e| (e.total(), e.reference_length)))
                        .collect()
                };
                let (ea, eb) = (edits(system)?, edits(baseline_outputs)?);
                let rate = |e: &[(usize, usize)], idx: &[usize]| {
                    let (s, l) = idx.iter().fold((0, 0), |(s, l), &i| (s + e[i].0, l + e[i].1));
                    Ok(100.0 * s as f64 / l as f64)
                };
                paired_bootstrap_indexed(n, |i| rate(&ea, i), |i| rate(&eb, i), self.resamples, self.seed)?
            } else {
                let score = |sys: &[String], idx: &[usize]| {
                    let c: Vec<&str> = idx.iter().map(|&i| sys[i].as_str()).collect();
                    let r: Vec<&str> = idx.iter().map(|&i| references[i].as_str()).collect();
                    self.score(m, &c, &r)
                };
                paired_bootstrap_indexed(
                    n,
                    |i| score(system, i),
                    |i| score(baseline_outputs, i),
                    self.resamples,
                    self.seed,
                )?
            };
            deltas.insert(m.name().to_string(), delta);
            p_values.insert(m.name().to_string(), p_value);
        }
        report.comparison = Some(Comparison {
            baseline: baseline.to_string(),
            deltas,
            p_values,
        });
        Ok(())
    }
}
