//! Dynamic time warping with steps (1,0), (0,1), (1,1). The local cost is
//! the absolute difference, or the squared difference for the Euclidean
//! variant.

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DtwResult {
    /// Sum of local costs along the optimal warping path.
    pub cost: f64,
    /// Number of cells on that path.
    pub path_len: usize,
}

impl DtwResult {
    pub fn normalized(&self) -> f64 {
        self.cost / self.path_len as f64
    }
}

/// Optimal warping path cost and length. Cost ties prefer the diagonal
/// step, then the shorter path.
pub fn dtw(a: &[f64], b: &[f64]) -> Result<DtwResult> {
    warp(a, b, |x, y| (x - y).abs())
}

/// Square root of the smallest summed squared difference over all warping
/// paths.
pub fn dtw_euclidean(a: &[f64], b: &[f64]) -> Result<f64> {
    Ok(warp(a, b, |x, y| (x - y) * (x - y))?.cost.sqrt())
}

fn warp(a: &[f64], b: &[f64], cost: impl Fn(f64, f64) -> f64) -> Result<DtwResult> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::invalid("dtw needs non-empty sequences"));
    }
    let m = b.len();
    let mut prev: Vec<(f64, usize)> = vec![(f64::INFINITY, 0); m];
    let mut cur: Vec<(f64, usize)> = vec![(f64::INFINITY, 0); m];

    for (i, &ai) in a.iter().enumerate() {
        for (j, &bj) in b.iter().enumerate() {
            let local = cost(ai, bj);
            let best = if i == 0 && j == 0 {
                (0.0, 0)
            } else {
                let mut best = (f64::INFINITY, usize::MAX);
                let mut consider = |c: (f64, usize)| {
                    if c.0 < best.0 || (c.0 == best.0 && c.1 < best.1) {
                        best = c;
                    }
                };
                if i > 0 && j > 0 {
                    consider(prev[j - 1]);
                }
                if i > 0 {
                    consider(prev[j]);
                }
                if j > 0 {
                    consider(cur[j - 1]);
                }
                best
            };
            cur[j] = (best.0 + local, best.1 + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    let (cost, path_len) = prev[m - 1];
    Ok(DtwResult { cost, path_len })
}

/// Mean local cost along the optimal path.
pub fn dtw_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    Ok(dtw(a, b)?.normalized())
}

/// Total local cost along the optimal path.
pub fn dtw_cost(a: &[f64], b: &[f64]) -> Result<f64> {
    Ok(dtw(a, b)?.cost)
}
