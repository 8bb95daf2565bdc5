use serde::{Deserialize, Serialize};

use super::kernel::{gram, rbf, scale_gamma};
use super::smo::{solve, Problem};
use super::{b64, check_rows};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OsvmParams {
    /// Upper bound on the training outlier fraction.
    pub nu: f64,
    /// RBF width; `None` uses `1 / (d · var(X))`.
    pub gamma: Option<f64>,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for OsvmParams {
    fn default() -> Self {
        OsvmParams {
            nu: 0.1,
            gamma: None,
            tol: 1e-3,
            max_iter: 10_000_000,
        }
    }
}

/// ν-one-class SVM with an RBF kernel; dual weights sum to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OneClassSvmModel {
    pub gamma: f64,
    pub nu: f64,
    #[serde(with = "b64::matrix")]
    pub support: Vec<Vec<f64>>,
    #[serde(with = "b64::vec")]
    pub alpha: Vec<f64>,
    pub rho: f64,
}

impl OneClassSvmModel {
    pub fn fit(rows: &[Vec<f64>], params: &OsvmParams) -> Result<OneClassSvmModel> {
        check_rows(rows)?;
        if !(params.nu > 0.0 && params.nu <= 1.0) {
            return Err(Error::invalid("nu must lie in (0, 1]"));
        }
        let n = rows.len();
        let gamma = params.gamma.unwrap_or_else(|| scale_gamma(rows));
        let k = gram(rows, gamma);
        let cap = 1.0 / (params.nu * n as f64);
        let full = ((params.nu * n as f64).floor() as usize).min(n);
        let mut alpha0 = vec![0.0; n];
        for a in alpha0.iter_mut().take(full) {
            *a = cap;
        }
        if full < n {
            alpha0[full] = (1.0 - full as f64 * cap).max(0.0);
        }
        let y = vec![1.0; n];
        let p = vec![0.0; n];
        let upper = vec![cap; n];
        let sol = solve(
            &Problem {
                kernel: &k,
                y: &y,
                p: &p,
                upper: &upper,
            },
            alpha0,
            params.tol,
            params.max_iter,
        );
        let used: Vec<usize> = (0..n).filter(|&i| sol.alpha[i] > 0.0).collect();
        Ok(OneClassSvmModel {
            gamma,
            nu: params.nu,
            support: used.iter().map(|&i| rows[i].clone()).collect(),
            alpha: used.iter().map(|&i| sol.alpha[i]).collect(),
            rho: sol.rho,
        })
    }

    /// `Σ α_i K(x_i, x) − ρ`; negative outside the learned support.
    pub fn score(&self, x: &[f64]) -> f64 {
        self.support
            .iter()
            .zip(&self.alpha)
            .map(|(s, a)| a * rbf(s, x, self.gamma))
            .sum::<f64>()
            - self.rho
    }
}
