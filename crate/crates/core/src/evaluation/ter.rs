use std::collections::{HashMap, HashSet};

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::words;
use crate::error::{Error, Result};

/// How block shifts are searched.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShiftSearch {
    /// Repeatedly apply the shifts that lower the edit distance most,
    /// following the [`GREEDY_BEAM_WIDTH`] best states per round.
    Greedy,
    /// Exhaustive search when the reference has at most
    /// [`EXACT_MAX_REFERENCE`] tokens and the candidate at most
    /// [`EXACT_MAX_CANDIDATE`]; greedy otherwise.
    ExactWhenShort,
}

pub const EXACT_MAX_REFERENCE: usize = 10;
pub const EXACT_MAX_CANDIDATE: usize = 12;
/// Longest block and farthest move the greedy search considers.
pub const MAX_SHIFT_SIZE: usize = 10;
pub const MAX_SHIFT_DISTANCE: usize = 50;
pub const GREEDY_BEAM_WIDTH: usize = 8;

/// Edit counts for one pair.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TerEdits {
    pub shifts: usize,
    pub edits: usize,
    pub reference_length: usize,
}

impl TerEdits {
    pub fn total(&self) -> usize {
        self.shifts + self.edits
    }

    pub fn rate(&self) -> f64 {
        100.0 * self.total() as f64 / self.reference_length as f64
    }
}

pub fn edit_distance<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, x) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(x != y);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Moves `seq[start..start+len]` so that it begins at `dest` in the result.
fn shifted<T: Clone>(seq: &[T], start: usize, len: usize, dest: usize) -> Vec<T> {
    let mut rest: Vec<T> = Vec::with_capacity(seq.len());
    rest.extend_from_slice(&seq[..start]);
    rest.extend_from_slice(&seq[start + len..]);
    let mut out = Vec::with_capacity(seq.len());
    out.extend_from_slice(&rest[..dest]);
    out.extend_from_slice(&seq[start..start + len]);
    out.extend_from_slice(&rest[dest..]);
    out
}

fn all_shifts<T: Clone + PartialEq>(seq: &[T], max_len: usize, max_dist: usize) -> impl Iterator<Item = Vec<T>> + '_ {
    let n = seq.len();
    (0..n).flat_map(move |start| {
        (1..=max_len.min(n - start)).flat_map(move |len| {
            (0..=n - len)
                .filter(move |&dest| dest != start && dest.abs_diff(start) <= max_dist)
                .map(move |dest| shifted(seq, start, len, dest))
        })
    })
}

/// Best-improvement shift search keeping the `width` lowest-distance states
/// per round. Only shifts that lower the edit distance are followed; width 1
/// is plain greedy.
fn greedy<T: Clone + PartialEq + Eq + std::hash::Hash>(cand: &[T], reference: &[T], width: usize) -> (usize, usize) {
    let start = edit_distance(cand, reference);
    let mut best = (0, start);
    let mut frontier = vec![(cand.to_vec(), start)];
    let mut seen: HashSet<Vec<T>> = HashSet::new();
    let mut depth = 0;
    while !frontier.is_empty() {
        depth += 1;
        let mut next: Vec<(Vec<T>, usize)> = Vec::new();
        for (state, d) in &frontier {
            for s in all_shifts(state, MAX_SHIFT_SIZE, MAX_SHIFT_DISTANCE) {
                let ds = edit_distance(&s, reference);
                if ds < *d && seen.insert(s.clone()) {
                    next.push((s, ds));
                }
            }
        }
        next.sort_by_key(|(_, d)| *d);
        next.truncate(width);
        if let Some((_, d)) = next.first() {
            if depth + d < best.0 + best.1 {
                best = (depth, *d);
            }
        }
        frontier = next;
    }
    best
}

/// Edit distance can never drop below this under reordering.
fn bag_bound<T: Eq + std::hash::Hash>(a: &[T], b: &[T]) -> usize {
    let mut counts: HashMap<&T, isize> = HashMap::new();
    for x in a {
        *counts.entry(x).or_insert(0) += 1;
    }
    let mut common = 0;
    for y in b {
        if let Some(c) = counts.get_mut(y) {
            if *c > 0 {
                *c -= 1;
                common += 1;
            }
        }
    }
    a.len().max(b.len()) - common
}

/// Minimum of `shifts + edit distance` by breadth-first search over shift
/// sequences, stopping once no deeper level can improve.
fn exact<T: Clone + Eq + std::hash::Hash>(cand: &[T], reference: &[T]) -> (usize, usize) {
    let bound = bag_bound(cand, reference);
    let mut best = (0, edit_distance(cand, reference));
    let mut frontier = vec![cand.to_vec()];
    let mut seen: HashSet<Vec<T>> = frontier.iter().cloned().collect();
    let mut depth = 0;
    while depth + 1 + bound < best.0 + best.1 && !frontier.is_empty() {
        depth += 1;
        let mut next = Vec::new();
        for state in &frontier {
            for s in all_shifts(state, state.len(), state.len()) {
                if seen.insert(s.clone()) {
                    let d = edit_distance(&s, reference);
                    if depth + d < best.0 + best.1 {
                        best = (depth, d);
                    }
                    next.push(s);
                }
            }
        }
        frontier = next;
    }
    best
}

fn check(reference: &[&str]) -> Result<()> {
    if reference.is_empty() {
        Err(Error::DegenerateBatch("empty corpus or sentence".into()))
    } else {
        Ok(())
    }
}

pub fn ter_edits(candidate: &str, reference: &str, search: ShiftSearch) -> Result<TerEdits> {
    let c = words(candidate);
    let r = words(reference);
    check(&r)?;
    let short = r.len() <= EXACT_MAX_REFERENCE && c.len() <= EXACT_MAX_CANDIDATE;
    let (shifts, edits) = match search {
        ShiftSearch::ExactWhenShort if short => exact(&c, &r),
        _ => greedy(&c, &r, GREEDY_BEAM_WIDTH),
    };
    Ok(TerEdits {
        shifts,
        edits,
        reference_length: r.len(),
    })
}

/// Translation edit rate in percent.
pub fn ter(candidate: &str, reference: &str) -> Result<f64> {
    Ok(ter_edits(candidate, reference, ShiftSearch::ExactWhenShort)?.rate())
}

pub fn ter_greedy(candidate: &str, reference: &str) -> Result<f64> {
    Ok(ter_edits(candidate, reference, ShiftSearch::Greedy)?.rate())
}

/// Exhaustive shift search regardless of length; exponential, meant as an
/// oracle for short pairs.
pub fn ter_exact(candidate: &str, reference: &str) -> Result<f64> {
    let c = words(candidate);
    let r = words(reference);
    check(&r)?;
    let (s, e) = exact(&c, &r);
    Ok(100.0 * (s + e) as f64 / r.len() as f64)
}

/// Total edits over total reference length.
pub fn corpus_ter<C: AsRef<str>, R: AsRef<str>>(candidates: &[C], references: &[R], search: ShiftSearch) -> Result<f64> {
    if candidates.is_empty() {
        return Err(Error::DegenerateBatch("empty corpus or sentence".into()));
    }
    if candidates.len() != references.len() {
        return Err(Error::Alignment("candidate and reference counts differ".into()));
    }
    let (mut edits, mut len) = (0, 0);
    for (c, r) in candidates.iter().zip(references) {
        let e = ter_edits(c.as_ref(), r.as_ref(), search)?;
        edits += e.total();
        len += e.reference_length;
    }
    Ok(100.0 * edits as f64 / len as f64)
}

/// `(candidate, reference)` over a six-word alphabet: a reference of 1 to 10
/// words and a copy hit by up to three random substitutions, deletions,
/// insertions or block moves.
pub fn perturbed_pair<R: Rng>(rng: &mut R) -> (String, String) {
    let vocab = ["a", "b", "c", "d", "e", "f"];
    let n = rng.gen_range(1..=10);
    let reference: Vec<&str> = (0..n).map(|_| vocab[rng.gen_range(0..vocab.len())]).collect();
    let mut cand = reference.clone();
    for _ in 0..rng.gen_range(0..=3) {
        match rng.gen_range(0..4) {
            0 if !cand.is_empty() => {
                let i = rng.gen_range(0..cand.len());
                cand[i] = vocab[rng.gen_range(0..vocab.len())];
            }
            1 if !cand.is_empty() => {
                cand.remove(rng.gen_range(0..cand.len()));
            }
            2 if cand.len() < 10 => cand.insert(rng.gen_range(0..=cand.len()), vocab[rng.gen_range(0..vocab.len())]),
            _ if cand.len() >= 2 => {
                let start = rng.gen_range(0..cand.len());
                let len = rng.gen_range(1..=cand.len() - start);
                let block: Vec<&str> = cand.drain(start..start + len).collect();
                let dest = rng.gen_range(0..=cand.len());
                for (k, w) in block.into_iter().enumerate() {
                    cand.insert(dest + k, w);
                }
            }
            _ => {}
        }
    }
    (cand.join(" "), reference.join(" "))
}
