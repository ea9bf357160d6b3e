use std::collections::HashMap;

use super::words;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChrfConfig {
    pub char_order: usize,
    /// 0 disables word n-grams.
    pub word_order: usize,
    pub beta: f64,
}

impl Default for ChrfConfig {
    fn default() -> Self {
        Self {
            char_order: 6,
            word_order: 0,
            beta: 2.0,
        }
    }
}

/// Matched / candidate-total / reference-total per order.
#[derive(Clone, Debug, Default)]
struct Stats(Vec<[usize; 3]>);

fn grams<T: std::hash::Hash + Eq + Clone>(seq: &[T], n: usize) -> HashMap<Vec<T>, usize> {
    let mut m = HashMap::new();
    if seq.len() >= n {
        for w in seq.windows(n) {
            *m.entry(w.to_vec()).or_insert(0) += 1;
        }
    }
    m
}

fn add_order<T: std::hash::Hash + Eq + Clone>(c: &[T], r: &[T], n: usize) -> [usize; 3] {
    let cg = grams(c, n);
    let rg = grams(r, n);
    let matched = cg.iter().map(|(g, &k)| k.min(rg.get(g).copied().unwrap_or(0))).sum();
    [matched, cg.values().sum(), rg.values().sum()]
}

fn sentence_stats(candidate: &str, reference: &str, cfg: &ChrfConfig) -> Stats {
    let cc: Vec<char> = candidate.chars().filter(|c| !c.is_whitespace()).collect();
    let rc: Vec<char> = reference.chars().filter(|c| !c.is_whitespace()).collect();
    let cw = words(candidate);
    let rw = words(reference);
    let mut s: Vec<[usize; 3]> = (1..=cfg.char_order).map(|n| add_order(&cc, &rc, n)).collect();
    s.extend((1..=cfg.word_order).map(|n| add_order(&cw, &rw, n)));
    Stats(s)
}

fn score(stats: &Stats, beta: f64) -> f64 {
    let (mut p_sum, mut p_n, mut r_sum, mut r_n) = (0.0, 0, 0.0, 0);
    for &[m, c, r] in &stats.0 {
        if c > 0 {
            p_sum += m as f64 / c as f64;
            p_n += 1;
        }
        if r > 0 {
            r_sum += m as f64 / r as f64;
            r_n += 1;
        }
    }
    let p = if p_n > 0 { p_sum / p_n as f64 } else { 0.0 };
    let r = if r_n > 0 { r_sum / r_n as f64 } else { 0.0 };
    let b2 = beta * beta;
    if p + r == 0.0 {
        0.0
    } else {
        100.0 * (1.0 + b2) * p * r / (b2 * p + r)
    }
}

/// Character n-gram F-score, optionally mixed with word n-grams. Precision
/// and recall are averaged over the orders present before combining.
pub fn chrf(candidate: &str, reference: &str, cfg: &ChrfConfig) -> Result<f64> {
    if candidate.trim().is_empty() || reference.trim().is_empty() {
        return Err(Error::DegenerateBatch("empty corpus or sentence".into()));
    }
    Ok(score(&sentence_stats(candidate, reference, cfg), cfg.beta))
}

/// chrF over statistics summed across the corpus. Empty candidates count as
/// all-miss.
pub fn corpus_chrf<C: AsRef<str>, R: AsRef<str>>(candidates: &[C], references: &[R], cfg: &ChrfConfig) -> Result<f64> {
    if candidates.is_empty() {
        return Err(Error::DegenerateBatch("empty corpus or sentence".into()));
    }
    if candidates.len() != references.len() {
        return Err(Error::Alignment("candidate and reference counts differ".into()));
    }
    let orders = cfg.char_order + cfg.word_order;
    let mut total = Stats(vec![[0; 3]; orders]);
    for (c, r) in candidates.iter().zip(references) {
        let s = sentence_stats(c.as_ref(), r.as_ref(), cfg);
        for (t, x) in total.0.iter_mut().zip(s.0) {
            for k in 0..3 {
                t[k] += x[k];
            }
        }
    }
    Ok(score(&total, cfg.beta))
}
