use serde::{Deserialize, Serialize};

use super::words;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RougeScore {
    pub precision: f64,
    pub recall: f64,
    pub f: f64,
}

pub fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { prev[j + 1].max(cur[j]) };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// LCS precision and recall combined as `(1+β²)PR / (R + β²P)`.
pub fn rouge_l(candidate: &str, reference: &str, beta: f64) -> Result<RougeScore> {
    let c = words(candidate);
    let r = words(reference);
    if c.is_empty() || r.is_empty() {
        return Err(Error::DegenerateBatch("empty corpus or sentence".into()));
    }
    let l = lcs_len(&c, &r) as f64;
    let precision = l / c.len() as f64;
    let recall = l / r.len() as f64;
    let b2 = beta * beta;
    let f = if l == 0.0 {
        0.0
    } else {
        (1.0 + b2) * precision * recall / (recall + b2 * precision)
    };
    Ok(RougeScore { precision, recall, f })
}

/// Mean sentence-level F over the corpus; an empty candidate scores 0.
pub fn corpus_rouge_l<C: AsRef<str>, R: AsRef<str>>(candidates: &[C], references: &[R], beta: f64) -> Result<f64> {
    if candidates.is_empty() {
        return Err(Error::DegenerateBatch("empty corpus or sentence".into()));
    }
    if candidates.len() != references.len() {
        return Err(Error::Alignment("candidate and reference counts differ".into()));
    }
    let mut sum = 0.0;
    for (c, r) in candidates.iter().zip(references) {
        if words(c.as_ref()).is_empty() {
            if words(r.as_ref()).is_empty() {
                return Err(Error::DegenerateBatch("empty corpus or sentence".into()));
            }
            continue;
        }
        sum += rouge_l(c.as_ref(), r.as_ref(), beta)?.f;
    }
    Ok(sum / candidates.len() as f64)
}
