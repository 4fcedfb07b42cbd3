use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::rng;

/// Shuffle `pairs` deterministically and cut them into train/validation/test.
///
/// Train and validation sizes are `round(f * n)`; test takes the remainder.
pub fn split_pairs<T: Clone>(pairs: &[T], fractions: [f64; 3], seed: u64) -> Result<[Vec<T>; 3]> {
    if fractions.iter().any(|f| !(0.0..=1.0).contains(f)) {
        return Err(Error::Invalid(format!(
            "split fractions {fractions:?} must lie in [0, 1]"
        )));
    }
    let total: f64 = fractions.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::Invalid(format!(
            "split fractions {fractions:?} sum to {total}, not 1"
        )));
    }
    let n = pairs.len();
    let mut shuffled = pairs.to_vec();
    shuffled.shuffle(&mut rng::stream(seed, "split-pairs", &[]));

    let n_train = ((fractions[0] * n as f64).round() as usize).min(n);
    let n_val = ((fractions[1] * n as f64).round() as usize).min(n - n_train);
    let test = shuffled.split_off(n_train + n_val);
    let val = shuffled.split_off(n_train);
    Ok([shuffled, val, test])
}
