use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MIN_RESAMPLES: usize = 100;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BootstrapResult {
    /// `metric(A) − metric(B)` on the full corpus.
    pub delta: f64,
    /// Share of resamples whose delta does not keep the strict sign of the
    /// full delta. A zero full delta therefore gives 1.
    pub p_value: f64,
    pub resamples: usize,
}

/// Paired bootstrap over sentence indices, both systems scored on the same
/// resampled corpus.
pub fn paired_bootstrap<S, F>(
    system_a: &[S],
    system_b: &[S],
    references: &[S],
    metric: F,
    resamples: usize,
    seed: u64,
) -> Result<BootstrapResult>
where
    S: AsRef<str>,
    F: Fn(&[&str], &[&str]) -> Result<f64>,
{
    let n = references.len();
    if system_a.len() != n || system_b.len() != n {
        return Err(Error::Alignment(format!(
            "system sizes {} and {} do not match {} references",
            system_a.len(),
            system_b.len(),
            n
        )));
    }
    if n == 0 {
        return Err(Error::DegenerateBatch("empty corpus or sentence".into()));
    }
    if resamples < MIN_RESAMPLES {
        return Err(Error::Config(format!("at least {MIN_RESAMPLES} resamples required")));
    }
    let a: Vec<&str> = system_a.iter().map(AsRef::as_ref).collect();
    let b: Vec<&str> = system_b.iter().map(AsRef::as_ref).collect();
    let r: Vec<&str> = references.iter().map(AsRef::as_ref).collect();
    fn pick<'a>(sys: &[&'a str], refs: &[&'a str], idx: &[usize]) -> (Vec<&'a str>, Vec<&'a str>) {
        (idx.iter().map(|&i| sys[i]).collect(), idx.iter().map(|&i| refs[i]).collect())
    }
    paired_bootstrap_indexed(
        n,
        |idx| {
            let (c, rr) = pick(&a, &r, idx);
            metric(&c, &rr)
        },
        |idx| {
            let (c, rr) = pick(&b, &r, idx);
            metric(&c, &rr)
        },
        resamples,
        seed,
    )
}

/// Bootstrap core over sentence indices. `score_a` and `score_b` score a
/// resampled corpus given as indices into the `n` aligned sentences, which
/// lets callers cache per-sentence statistics.
pub fn paired_bootstrap_indexed<A, B>(n: usize, score_a: A, score_b: B, resamples: usize, seed: u64) -> Result<BootstrapResult>
where
    A: Fn(&[usize]) -> Result<f64>,
    B: Fn(&[usize]) -> Result<f64>,
{
    if n == 0 {
        return Err(Error::DegenerateBatch("empty corpus or sentence".into()));
    }
    if resamples < MIN_RESAMPLES {
        return Err(Error::Config(format!("at least {MIN_RESAMPLES} resamples required")));
    }
    let all: Vec<usize> = (0..n).collect();
    let delta = score_a(&all)? - score_b(&all)?;
    let sign = delta.partial_cmp(&0.0).unwrap_or(std::cmp::Ordering::Equal);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut flips = 0;
    let mut idx = Vec::with_capacity(n);
    for _ in 0..resamples {
        idx.clear();
        idx.extend((0..n).map(|_| rng.gen_range(0..n)));
        let d = score_a(&idx)? - score_b(&idx)?;
        let kept = sign != std::cmp::Ordering::Equal && d.partial_cmp(&0.0) == Some(sign);
        flips += usize::from(!kept);
    }
    Ok(BootstrapResult {
        delta,
        p_value: flips as f64 / resamples as f64,
        resamples,
    })
}
