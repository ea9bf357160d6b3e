use serde::{Deserialize, Serialize};

use crate::data::{detokenize, split_item, tokenize, AlignedSpan, KbEntry, Superlatives};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Comparator {
    Equals,
    /// Smallest value of the slot.
    Superlative,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Constraint {
    pub slot: String,
    pub comparator: Comparator,
    pub operand: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct KbQuery {
    /// Equality filters first, then superlatives, each in alignment order.
    pub constraints: Vec<Constraint>,
}

/// One constraint per aligned phrase. Superlative keywords become
/// superlative constraints; everything else is an equality filter.
pub fn construct_kb_query(alignment: &[AlignedSpan], superlatives: &Superlatives) -> Result<KbQuery> {
    if alignment.is_empty() {
        return Err(Error::Query("utterance has no resolvable slots".into()));
    }
    let mut equals = Vec::new();
    let mut extremal = Vec::new();
    for span in alignment {
        let (bucket, comparator) = if superlatives.contains(&span.value) {
            (&mut extremal, Comparator::Superlative)
        } else {
            (&mut equals, Comparator::Equals)
        };
        let c = Constraint {
            slot: span.slot.clone(),
            comparator,
            operand: span.value.clone(),
        };
        if !bucket.contains(&c) {
            bucket.push(c);
        }
    }
    equals.extend(extremal);
    Ok(KbQuery { constraints: equals })
}

/// Leading number of a value with units stripped: `"4 miles"` → 4.
pub fn parse_number(value: &str) -> Option<f64> {
    value.split_whitespace().next()?.parse().ok()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Resolution {
    /// Row index within the scenario.
    pub index: usize,
    pub entry: KbEntry,
}

impl Resolution {
    pub fn memory_items(&self) -> Vec<String> {
        memory_items(&self.entry)
    }
}

/// `slot:value` items of an entry, in slot-name order.
pub fn memory_items(entry: &KbEntry) -> Vec<String> {
    entry.iter().map(|(s, v)| format!("{s}:{v}")).collect()
}

fn same_value(a: &str, b: &str) -> bool {
    tokenize(a) == tokenize(b)
}

/// Filters by every equality, then keeps the minimal rows of each
/// superlative slot (numeric when any value parses, lexicographic
/// otherwise). The first surviving row in KB order wins.
pub fn resolve_query(query: &KbQuery, entries: &[KbEntry]) -> Result<Resolution> {
    let mut rows: Vec<usize> = (0..entries.len()).collect();
    for c in &query.constraints {
        rows = match c.comparator {
            Comparator::Equals => rows
                .into_iter()
                .filter(|&i| entries[i].get(&c.slot).is_some_and(|v| same_value(v, &c.operand)))
                .collect(),
            Comparator::Superlative => extremal_rows(&rows, entries, &c.slot),
        };
        if rows.is_empty() {
            return Err(Error::Resolution(format!(
                "no entry satisfies {} {:?} `{}`",
                c.slot, c.comparator, c.operand
            )));
        }
    }
    let index = *rows.first().ok_or_else(|| Error::Resolution("knowledge base is empty".into()))?;
    Ok(Resolution {
        index,
        entry: entries[index].clone(),
    })
}

fn extremal_rows(rows: &[usize], entries: &[KbEntry], slot: &str) -> Vec<usize> {
    let valued: Vec<(usize, &String)> = rows.iter().filter_map(|&i| entries[i].get(slot).map(|v| (i, v))).collect();
    let numeric: Vec<(usize, f64)> = valued.iter().filter_map(|&(i, v)| parse_number(v).map(|x| (i, x))).collect();
    if !numeric.is_empty() {
        let best = numeric.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
        return numeric.into_iter().filter(|p| p.1 == best).map(|p| p.0).collect();
    }
    match valued.iter().map(|p| p.1).min() {
        Some(best) => valued.iter().filter(|p| p.1 == best).map(|p| p.0).collect(),
        None => Vec::new(),
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Filled {
    pub tokens: Vec<String>,
    /// Slot tokens left in place because the memory has no value for them.
    pub missing: usize,
}

impl Filled {
    pub fn text(&self) -> String {
        detokenize(&self.tokens)
    }
}

/// Replaces each slot-name token that has a memory value with the value's
/// tokens. Tokens naming a slot from `slot_names` without a value are kept
/// and counted.
pub fn fill_slots_deterministic<A, B>(template: &[A], memory_items: &[B], slot_names: &[String]) -> Filled
where
    A: AsRef<str>,
    B: AsRef<str>,
{
    let values: Vec<(&str, &str)> = memory_items
        .iter()
        .filter_map(|m| match split_item(m.as_ref()) {
            (name, Some(value)) => Some((name, value)),
            _ => None,
        })
        .collect();
    let mut tokens = Vec::new();
    let mut missing = 0;
    for t in template {
        let t = t.as_ref();
        match values.iter().find(|(n, _)| *n == t) {
            Some((_, v)) => tokens.extend(tokenize(v)),
            None => {
                if slot_names.iter().any(|s| s == t) {
                    missing += 1;
                }
                tokens.push(t.to_string());
            }
        }
    }
    Filled { tokens, missing }
}
