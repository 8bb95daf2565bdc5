use rand::seq::index::sample;
use rand::Rng;

use crate::{Error, Result};

/// Means of `n` scores drawn without replacement, repeated `draws` times.
pub fn aggregate_scores(scores: &[f64], n: usize, draws: usize, rng: &mut impl Rng) -> Result<Vec<f64>> {
    check(scores.len(), n)?;
    Ok((0..draws)
        .map(|_| {
            let idx = sample(rng, scores.len(), n);
            idx.iter().map(|i| scores[i]).sum::<f64>() / n as f64
        })
        .collect())
}

/// Means over consecutive disjoint windows of `n` scores; a trailing
/// partial window is dropped.
pub fn aggregate_exhaustive(scores: &[f64], n: usize) -> Result<Vec<f64>> {
    check(scores.len(), n)?;
    Ok(scores.chunks_exact(n).map(|c| c.iter().sum::<f64>() / n as f64).collect())
}

/// Index sets of `n` rows drawn without replacement, for aggregating
/// feature vectors instead of scores.
pub fn draw_windows(len: usize, n: usize, draws: usize, rng: &mut impl Rng) -> Result<Vec<Vec<usize>>> {
    check(len, n)?;
    Ok((0..draws).map(|_| sample(rng, len, n).into_vec()).collect())
}

fn check(len: usize, n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::invalid("aggregation window must be at least 1"));
    }
    if n > len {
        return Err(Error::invalid(format!("aggregation window {n} exceeds {len} available scores")));
    }
    Ok(())
}
