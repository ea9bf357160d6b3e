use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::words;
use crate::error::{Error, Result};

/// Additive floor for zero clipped-match counts.
pub const BLEU_SMOOTHING_EPSILON: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BleuScore {
    /// 0..=100.
    pub score: f64,
    /// Clipped precision per order; `None` when the candidates have no
    /// n-grams of that order (the order is then left out of the mean).
    pub precisions: Vec<Option<f64>>,
    pub brevity_penalty: f64,
    pub candidate_length: usize,
    pub reference_length: usize,
}

fn ngram_counts<'a, 'b>(tokens: &'b [&'a str], n: usize) -> HashMap<&'b [&'a str], usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *counts.entry(w).or_insert(0) += 1;
        }
    }
    counts
}

/// Corpus BLEU from aggregated clipped n-gram counts, one reference per
/// candidate.
pub fn bleu<C: AsRef<str>, R: AsRef<str>>(candidates: &[C], references: &[R], max_n: usize) -> Result<BleuScore> {
    if candidates.is_empty() {
        return Err(Error::DegenerateBatch("empty corpus or sentence".into()));
    }
    if candidates.len() != references.len() {
        return Err(Error::Alignment(format!(
            "{} candidates but {} references",
            candidates.len(),
            references.len()
        )));
    }
    if max_n == 0 {
        return Err(Error::Config("BLEU order must be positive".into()));
    }
    let mut matched = vec![0usize; max_n];
    let mut total = vec![0usize; max_n];
    let (mut c_len, mut r_len) = (0, 0);
    for (c, r) in candidates.iter().zip(references) {
        let c = words(c.as_ref());
        let r = words(r.as_ref());
        c_len += c.len();
        r_len += r.len();
        for n in 1..=max_n {
            let cc = ngram_counts(&c, n);
            let rc = ngram_counts(&r, n);
            for (g, &k) in &cc {
                matched[n - 1] += k.min(rc.get(g).copied().unwrap_or(0));
                total[n - 1] += k;
            }
        }
    }
    let precisions: Vec<Option<f64>> = (0..max_n)
        .map(|i| (total[i] > 0).then(|| matched[i] as f64 / total[i] as f64))
        .collect();
    let logs: Vec<f64> = (0..max_n)
        .filter(|&i| total[i] > 0)
        .map(|i| (matched[i] as f64).max(BLEU_SMOOTHING_EPSILON).ln() - (total[i] as f64).ln())
        .collect();
    let brevity_penalty = if c_len == 0 {
        0.0
    } else if c_len >= r_len {
        1.0
    } else {
        (1.0 - r_len as f64 / c_len as f64).exp()
    };
    let score = if logs.is_empty() {
        0.0
    } else {
        100.0 * brevity_penalty * (logs.iter().sum::<f64>() / logs.len() as f64).exp()
    };
    Ok(BleuScore {
        score,
        precisions,
        brevity_penalty,
        candidate_length: c_len,
        reference_length: r_len,
    })
}
