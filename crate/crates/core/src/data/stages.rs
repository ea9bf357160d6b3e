use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::kb::{attenuate, KnowledgeBase, Superlatives, ValueTable};
use super::tokenize::detokenize;
use super::turn::{DialogueTurn, Stage};
use crate::conditions::SlotLexicon;
use crate::error::{Error, Result};
use crate::pipeline::{construct_kb_query, fill_slots_deterministic, resolve_query};

/// A raw single-turn exchange tied to a KB scenario.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawTurn {
    pub scenario: String,
    pub question: String,
    pub answer: String,
}

/// Counts of rows the reverse engineering could not handle cleanly.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct QualityReport {
    pub records: usize,
    /// Records whose scenario has no KB rows.
    pub without_kb: usize,
    pub unmatched_questions: usize,
    pub unmatched_answers: usize,
    /// Questions whose KB query could not be built or resolved.
    pub unresolved: usize,
    /// Answers that do not fill back from their stage-3 memory.
    pub ill_formed: usize,
    pub duplicates_removed: [usize; 3],
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct StageDatasets {
    pub stage1: Vec<DialogueTurn>,
    pub stage2: Vec<DialogueTurn>,
    pub stage3: Vec<DialogueTurn>,
    pub report: QualityReport,
}

fn dedup(rows: Vec<DialogueTurn>) -> (Vec<DialogueTurn>, usize) {
    let n = rows.len();
    let mut seen = BTreeSet::new();
    let kept: Vec<DialogueTurn> = rows
        .into_iter()
        .filter(|r| seen.insert((r.input.clone(), r.memory.clone(), r.target.clone())))
        .collect();
    let removed = n - kept.len();
    (kept, removed)
}

/// Slot detection, slot mapping and slot filling datasets from raw turns.
///
/// Stage 3 memory is the KB row resolved from the question's aligned slots;
/// when no row resolves, the values aligned in the answer stand in.
pub fn build_stage_datasets(
    raw: &[RawTurn],
    kb: &KnowledgeBase,
    lexicon: &SlotLexicon,
    superlatives: &Superlatives,
) -> Result<StageDatasets> {
    let mut report = QualityReport {
        records: raw.len(),
        ..Default::default()
    };
    let (mut s1, mut s2, mut s3) = (Vec::new(), Vec::new(), Vec::new());
    for (index, r) in raw.iter().enumerate() {
        if r.question.trim().is_empty() || r.answer.trim().is_empty() {
            return Err(Error::Ingestion {
                index,
                message: "question and answer must be non-empty".into(),
            });
        }
        let entries = kb.entries(&r.scenario);
        if entries.is_empty() {
            report.without_kb += 1;
            let q = detokenize(&super::tokenize(&r.question));
            s1.push(DialogueTurn::new(q.clone(), vec![], q, Stage::SlotDetection).with_scenario(&r.scenario));
            continue;
        }
        let table = ValueTable::for_scenario(entries, superlatives);
        let q = attenuate(&r.question, &table);
        let a = attenuate(&r.answer, &table);
        report.unmatched_questions += q.alignment.is_empty() as usize;
        report.unmatched_answers += a.alignment.is_empty() as usize;
        let raw_q = detokenize(&super::tokenize(&r.question));
        let raw_a = detokenize(&super::tokenize(&r.answer));

        s1.push(DialogueTurn::new(raw_q, vec![], q.text(), Stage::SlotDetection).with_scenario(&r.scenario));
        let emphasis = lexicon.order(q.alignment.iter().map(|s| s.slot.as_str()));
        s2.push(DialogueTurn::new(q.text(), emphasis, a.text(), Stage::SlotMapping).with_scenario(&r.scenario));

        let resolved = construct_kb_query(&q.alignment, superlatives).and_then(|query| resolve_query(&query, entries));
        let memory = match resolved {
            Ok(res) => res.memory_items(),
            Err(_) => {
                report.unresolved += 1;
                let mut pairs = a.slot_values();
                pairs.sort();
                pairs.into_iter().map(|(s, v)| format!("{s}:{v}")).collect()
            }
        };
        if fill_slots_deterministic(&a.tokens, &memory, lexicon.names()).text() != raw_a {
            report.ill_formed += 1;
        }
        s3.push(DialogueTurn::new(a.text(), memory, raw_a, Stage::SlotFilling).with_scenario(&r.scenario));
    }
    let (stage1, d1) = dedup(s1);
    let (stage2, d2) = dedup(s2);
    let (stage3, d3) = dedup(s3);
    report.duplicates_removed = [d1, d2, d3];
    Ok(StageDatasets {
        stage1,
        stage2,
        stage3,
        report,
    })
}
