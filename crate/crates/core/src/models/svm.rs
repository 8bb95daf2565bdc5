use std::collections::BTreeSet;

use log::debug;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::kernel::{gram, rbf, scale_gamma};
use super::smo::{solve, Problem};
use super::{b64, check_rows};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SvmParams {
    /// Penalty on margin violations.
    pub c: f64,
    /// RBF width; `None` uses `1 / (d · var(X))`.
    pub gamma: Option<f64>,
    /// Stopping tolerance on the maximal KKT violation.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SvmParams {
    fn default() -> Self {
        SvmParams {
            c: 1.0,
            gamma: None,
            tol: 1e-3,
            max_iter: 10_000_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Machine {
    /// `y_i α_i` for every stored support vector (zero when this machine
    /// does not use it).
    #[serde(with = "b64::vec")]
    pub coef: Vec<f64>,
    pub bias: f64,
}

/// One-vs-rest RBF support vector machine.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    pub classes: Vec<String>,
    pub gamma: f64,
    pub c: f64,
    #[serde(with = "b64::matrix")]
    pub support: Vec<Vec<f64>>,
    pub machines: Vec<Machine>,
}

impl SvmModel {
    pub fn fit<S: AsRef<str> + Sync>(rows: &[Vec<f64>], labels: &[S], params: &SvmParams) -> Result<SvmModel> {
        check_rows(rows)?;
        if labels.len() != rows.len() {
            return Err(Error::invalid("label count does not match row count"));
        }
        if !(params.c > 0.0) {
            return Err(Error::invalid("C must be positive"));
        }
        let classes: Vec<String> = labels
            .iter()
            .map(|l| l.as_ref().to_string())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        if classes.len() < 2 {
            return Err(Error::invalid("SVM needs at least two classes"));
        }
        let gamma = params.gamma.unwrap_or_else(|| scale_gamma(rows));
        let n = rows.len();
        let k = gram(rows, gamma);
        let p = vec![-1.0; n];
        let upper = vec![params.c; n];

        let solved: Vec<(Vec<f64>, f64)> = classes
            .par_iter()
            .map(|cls| {
                let y: Vec<f64> = labels.iter().map(|l| if l.as_ref() == cls { 1.0 } else { -1.0 }).collect();
                let prob = Problem {
                    kernel: &k,
                    y: &y,
                    p: &p,
                    upper: &upper,
                };
                let sol = solve(&prob, vec![0.0; n], params.tol, params.max_iter);
                debug!("class {cls}: dual objective {:.6}, KKT gap {:.2e}", sol.objective, sol.gap);
                let coef = sol.alpha.iter().zip(&y).map(|(a, y)| a * y).collect();
                (coef, -sol.rho)
            })
            .collect();

        let used: Vec<usize> = (0..n).filter(|&i| solved.iter().any(|(c, _)| c[i] != 0.0)).collect();
        Ok(SvmModel {
            classes,
            gamma,
            c: params.c,
            support: used.iter().map(|&i| rows[i].clone()).collect(),
            machines: solved
                .into_iter()
                .map(|(c, bias)| Machine {
                    coef: used.iter().map(|&i| c[i]).collect(),
                    bias,
                })
                .collect(),
        })
    }

    fn kernel_row(&self, x: &[f64]) -> Vec<f64> {
        self.support.iter().map(|s| rbf(s, x, self.gamma)).collect()
    }

    /// Signed distance-like decision value of every class machine.
    pub fn decision_values(&self, x: &[f64]) -> Vec<f64> {
        let kr = self.kernel_row(x);
        self.machines
            .iter()
            .map(|m| m.coef.iter().zip(&kr).map(|(a, k)| a * k).sum::<f64>() + m.bias)
            .collect()
    }

    /// Decision value of one class's machine; higher is more genuine.
    pub fn score(&self, x: &[f64], class: &str) -> Result<f64> {
        let idx = self
            .classes
            .iter()
            .position(|c| c == class)
            .ok_or_else(|| Error::invalid(format!("unknown class {class}")))?;
        let kr = self.kernel_row(x);
        let m = &self.machines[idx];
        Ok(m.coef.iter().zip(&kr).map(|(a, k)| a * k).sum::<f64>() + m.bias)
    }

    pub fn predict(&self, x: &[f64]) -> &str {
        let d = self.decision_values(x);
        let best = (0..d.len()).fold(0, |b, i| if d[i] > d[b] { i } else { b });
        &self.classes[best]
    }
}
