use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::tokenize::{detokenize, tokenize};
use super::turn::{read_jsonl, write_jsonl};
use crate::error::{Error, Result};

/// One knowledge-base row: slot name to value.
pub type KbEntry = BTreeMap<String, String>;

/// On-disk form: one scenario per line.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioRecord {
    pub scenario: String,
    pub entries: Vec<KbEntry>,
}

/// Per-scenario slot/value rows.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct KnowledgeBase {
    scenarios: BTreeMap<String, Vec<KbEntry>>,
}

impl KnowledgeBase {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, scenario: impl Into<String>, entries: Vec<KbEntry>) {
        self.scenarios.insert(scenario.into(), entries);
    }

    /// Rows of a scenario; unknown scenarios have none.
    pub fn entries(&self, scenario: &str) -> &[KbEntry] {
        self.scenarios.get(scenario).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn scenarios(&self) -> impl Iterator<Item = &str> {
        self.scenarios.keys().map(String::as_str)
    }

    pub fn is_empty(&self) -> bool {
        self.scenarios.values().all(Vec::is_empty)
    }

    pub fn from_records(records: Vec<ScenarioRecord>) -> Result<Self> {
        let mut kb = Self::new();
        for (index, r) in records.into_iter().enumerate() {
            for entry in &r.entries {
                if let Some((slot, _)) = entry.iter().find(|(s, v)| s.trim().is_empty() || v.trim().is_empty()) {
                    return Err(Error::Ingestion {
                        index,
                        message: format!("scenario `{}` has an empty slot or value near `{slot}`", r.scenario),
                    });
                }
            }
            if kb.scenarios.contains_key(&r.scenario) {
                return Err(Error::Ingestion {
                    index,
                    message: format!("duplicate scenario `{}`", r.scenario),
                });
            }
            kb.insert(r.scenario, r.entries);
        }
        Ok(kb)
    }

    pub fn to_records(&self) -> Vec<ScenarioRecord> {
        self.scenarios
            .iter()
            .map(|(s, e)| ScenarioRecord {
                scenario: s.clone(),
                entries: e.clone(),
            })
            .collect()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_records(read_jsonl(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_jsonl(path, &self.to_records())
    }
}

/// Keywords that express "the extremal entry by this slot".
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Superlatives {
    pub slot: String,
    pub words: Vec<String>,
}

impl Default for Superlatives {
    fn default() -> Self {
        Self {
            slot: "poidistance".into(),
            words: ["fastest", "nearest", "closest"].map(String::from).into(),
        }
    }
}

impl Superlatives {
    pub fn contains(&self, word: &str) -> bool {
        self.words.iter().any(|w| w == word)
    }
}

/// Value phrases to replace, sorted longest first, then by slot name.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ValueTable {
    phrases: Vec<(Vec<String>, String)>,
}

impl ValueTable {
    pub fn from_pairs<I, A, B>(pairs: I) -> Self
    where
        I: IntoIterator<Item = (A, B)>,
        A: AsRef<str>,
        B: AsRef<str>,
    {
        let mut phrases: Vec<(Vec<String>, String)> = pairs
            .into_iter()
            .map(|(slot, value)| (tokenize(value.as_ref()), slot.as_ref().to_string()))
            .filter(|(p, _)| !p.is_empty())
            .collect();
        phrases.sort_by(|a, b| b.0.len().cmp(&a.0.len()).then_with(|| a.1.cmp(&b.1)).then_with(|| a.0.cmp(&b.0)));
        phrases.dedup();
        Self { phrases }
    }

    /// Every value of every entry, plus the superlative keywords.
    pub fn for_scenario(entries: &[KbEntry], superlatives: &Superlatives) -> Self {
        let pairs = entries
            .iter()
            .flat_map(|e| e.iter().map(|(s, v)| (s.clone(), v.clone())))
            .chain(superlatives.words.iter().map(|w| (superlatives.slot.clone(), w.clone())));
        Self::from_pairs(pairs)
    }

    pub fn is_empty(&self) -> bool {
        self.phrases.is_empty()
    }
}

/// One replaced phrase.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlignedSpan {
    /// Token offset in the original utterance.
    pub start: usize,
    pub value: String,
    pub slot: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Attenuation {
    pub tokens: Vec<String>,
    pub alignment: Vec<AlignedSpan>,
}

impl Attenuation {
    pub fn text(&self) -> String {
        detokenize(&self.tokens)
    }

    /// Slot name to value, first occurrence wins.
    pub fn slot_values(&self) -> Vec<(String, String)> {
        let mut out: Vec<(String, String)> = Vec::new();
        for a in &self.alignment {
            if !out.iter().any(|(s, _)| s == &a.slot) {
                out.push((a.slot.clone(), a.value.clone()));
            }
        }
        out
    }
}

/// Replaces value phrases with slot names, scanning left to right and taking
/// the longest phrase at each position.
pub fn attenuate(utterance: &str, table: &ValueTable) -> Attenuation {
    let words = tokenize(utterance);
    let mut tokens = Vec::with_capacity(words.len());
    let mut alignment = Vec::new();
    let mut i = 0;
    while i < words.len() {
        let hit = table
            .phrases
            .iter()
            .find(|(p, _)| words.len() - i >= p.len() && words[i..i + p.len()] == p[..]);
        match hit {
            Some((phrase, slot)) => {
                alignment.push(AlignedSpan {
                    start: i,
                    value: detokenize(phrase),
                    slot: slot.clone(),
                });
                tokens.push(slot.clone());
                i += phrase.len();
            }
            None => {
                tokens.push(words[i].clone());
                i += 1;
            }
        }
    }
    Attenuation { tokens, alignment }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reverse_engineers_the_worked_example() {
        let table = ValueTable::from_pairs([("poidistance", "fastest"), ("poitype", "parking garage")]);
        let a = attenuate("can you find me the fastest route to a parking garage", &table);
        assert_eq!(a.text(), "can you find me the poidistance route to a poitype");
        assert_eq!(
            a.slot_values(),
            [
                ("poidistance".to_string(), "fastest".to_string()),
                ("poitype".to_string(), "parking garage".to_string())
            ]
        );
    }

    #[test]
    fn unmatched_text_passes_through() {
        let table = ValueTable::from_pairs([("poi", "valero")]);
        let a = attenuate("hello there", &table);
        assert_eq!(a.text(), "hello there");
        assert!(a.alignment.is_empty());
    }

    #[test]
    fn longest_match_then_alphabetical_slot() {
        let table = ValueTable::from_pairs([("poi", "parking"), ("poitype", "parking garage")]);
        let a = attenuate("a parking garage and parking", &table);
        assert_eq!(a.text(), "a poitype and poi");
        let tie = ValueTable::from_pairs([("poitype", "home"), ("poi", "home")]);
        assert_eq!(attenuate("go home", &tie).text(), "go poi");
    }

    #[test]
    fn kb_records_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("kb.jsonl");
        let mut kb = KnowledgeBase::new();
        kb.insert("s", vec![KbEntry::from([("poi".into(), "valero".into())])]);
        kb.save(&p).unwrap();
        assert_eq!(KnowledgeBase::load(&p).unwrap(), kb);
        std::fs::write(&p, r#"{"scenario":"s","entries":[{"poi":""}]}"#).unwrap();
        assert!(KnowledgeBase::load(&p).is_err());
    }
}
