use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Seeded shuffle, then the first `round(fraction · N)` rows go to test.
pub fn split_train_test<R: Clone>(rows: &[R], test_fraction: f64, seed: u64) -> Result<(Vec<R>, Vec<R>)> {
    if rows.len() < 5 {
        return Err(Error::Config(format!("need at least 5 rows to split, found {}", rows.len())));
    }
    if !(0.0..1.0).contains(&test_fraction) {
        return Err(Error::Config(format!("test fraction {test_fraction} outside [0, 1)")));
    }
    let mut order: Vec<usize> = (0..rows.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_test = (test_fraction * rows.len() as f64).round() as usize;
    let mut test_idx = order[..n_test].to_vec();
    let mut train_idx = order[n_test..].to_vec();
    test_idx.sort_unstable();
    train_idx.sort_unstable();
    let pick = |idx: &[usize]| idx.iter().map(|&i| rows[i].clone()).collect();
    Ok((pick(&train_idx), pick(&test_idx)))
}
