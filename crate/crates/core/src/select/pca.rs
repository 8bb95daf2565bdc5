use log::warn;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Principal axes fitted by SVD of the centred data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pca {
    pub mean: Vec<f64>,
    /// Unit-norm principal axes, strongest first; one row per component.
    pub components: Vec<Vec<f64>>,
    /// Sample variance along each stored axis.
    pub explained_variance: Vec<f64>,
    /// Total sample variance of the input.
    pub total_variance: f64,
    /// Number of leading axes used by [`Pca::transform`].
    pub n_retained: usize,
}

impl Pca {
    /// Fits up to `max_components` axes and retains the fewest whose
    /// explained-variance ratio reaches `variance_target`.
    pub fn fit(rows: &[Vec<f64>], max_components: usize, variance_target: f64) -> Result<Pca> {
        let n = rows.len();
        if n < 2 {
            return Err(Error::invalid("PCA needs at least two rows"));
        }
        let d = rows[0].len();
        if d == 0 || rows.iter().any(|r| r.len() != d) {
            return Err(Error::invalid("PCA rows must share a non-zero width"));
        }
        if max_components == 0 || !(variance_target > 0.0 && variance_target <= 1.0) {
            return Err(Error::invalid("PCA needs max_components >= 1 and a target in (0, 1]"));
        }
        let rank_cap = d.min(n - 1).max(1);
        let k = if max_components > rank_cap {
            warn!("PCA: {max_components} components requested, data supports {rank_cap}");
            rank_cap
        } else {
            max_components
        };

        let mut mean = vec![0.0; d];
        for r in rows {
            for (m, v) in mean.iter_mut().zip(r) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        let x = DMatrix::from_fn(n, d, |i, j| rows[i][j] - mean[j]);

        let svd = x.svd(false, true);
        let v_t = svd.v_t.expect("right singular vectors requested");
        let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
        order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]).then(a.cmp(&b)));

        let denom = (n - 1) as f64;
        let total_variance: f64 = svd.singular_values.iter().map(|s| s * s / denom).sum();
        let mut components = Vec::with_capacity(k);
        let mut explained_variance = Vec::with_capacity(k);
        for &idx in order.iter().take(k) {
            let mut axis: Vec<f64> = v_t.row(idx).iter().copied().collect();
            let lead = axis
                .iter()
                .enumerate()
                .fold(0, |best, (j, v)| if v.abs() > axis[best].abs() { j } else { best });
            if axis[lead] < 0.0 {
                axis.iter_mut().for_each(|v| *v = -*v);
            }
            let s = svd.singular_values[idx];
            components.push(axis);
            explained_variance.push(s * s / denom);
        }

        let n_retained = if total_variance <= f64::EPSILON * d as f64 {
            warn!("PCA: input has no variance, retaining one component");
            1
        } else {
            let mut acc = 0.0;
            let mut n_ret = k;
            for (i, ev) in explained_variance.iter().enumerate() {
                acc += ev / total_variance;
                if acc >= variance_target - 1e-12 {
                    n_ret = i + 1;
                    break;
                }
            }
            n_ret
        };

        Ok(Pca {
            mean,
            components,
            explained_variance,
            total_variance,
            n_retained,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.mean.len()
    }

    /// Cumulative explained-variance ratio of the first `n` axes.
    pub fn cumulative_ratio(&self, n: usize) -> f64 {
        if self.total_variance <= 0.0 {
            return 1.0;
        }
        self.explained_variance.iter().take(n).sum::<f64>() / self.total_variance
    }

    /// Projection onto the retained axes.
    pub fn transform(&self, row: &[f64]) -> Vec<f64> {
        self.project(row, self.n_retained)
    }

    pub fn project(&self, row: &[f64], n: usize) -> Vec<f64> {
        debug_assert_eq!(row.len(), self.mean.len());
        self.components
            .iter()
            .take(n)
            .map(|c| c.iter().zip(row).zip(&self.mean).map(|((a, x), m)| a * (x - m)).sum())
            .collect()
    }

    pub fn reconstruct(&self, scores: &[f64]) -> Vec<f64> {
        let mut out = self.mean.clone();
        for (s, c) in scores.iter().zip(&self.components) {
            for (o, a) in out.iter_mut().zip(c) {
                *o += s * a;
            }
        }
        out
    }
}
