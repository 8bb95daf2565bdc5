//! Sequential minimal optimisation for box- and equality-constrained
//! quadratic duals of the form
//!
//! min ½ αᵀQα + pᵀα  s.t.  yᵀα = const,  0 ≤ α_i ≤ C_i,
//!
//! with `Q_ij = y_i y_j K_ij`. Working pairs are the maximal KKT violators.

use log::{debug, warn};

const TAU: f64 = 1e-12;

pub(crate) struct Problem<'a> {
    /// Row-major `n × n` kernel matrix.
    pub kernel: &'a [f64],
    pub y: &'a [f64],
    pub p: &'a [f64],
    pub upper: &'a [f64],
}

#[derive(Debug, Clone)]
pub(crate) struct Solution {
    pub alpha: Vec<f64>,
    pub rho: f64,
    pub objective: f64,
    /// Maximal KKT violation at exit.
    pub gap: f64,
}

pub(crate) fn solve(prob: &Problem, alpha0: Vec<f64>, eps: f64, max_iter: usize) -> Solution {
    let n = prob.y.len();
    let k = prob.kernel;
    let y = prob.y;
    let c = prob.upper;
    let q = |i: usize, j: usize| y[i] * y[j] * k[i * n + j];

    let mut alpha = alpha0;
    let mut grad = prob.p.to_vec();
    for j in 0..n {
        if alpha[j] != 0.0 {
            for i in 0..n {
                grad[i] += q(i, j) * alpha[j];
            }
        }
    }

    let is_upper = |a: f64, i: usize| a >= c[i];
    let is_lower = |a: f64| a <= 0.0;

    let mut iterations = 0;
    let mut gap;
    loop {
        // maximal violating pair
        let (mut gmax, mut gmin) = (f64::NEG_INFINITY, f64::INFINITY);
        let (mut i_sel, mut j_sel) = (usize::MAX, usize::MAX);
        for t in 0..n {
            let v = -y[t] * grad[t];
            let up = if y[t] > 0.0 { !is_upper(alpha[t], t) } else { !is_lower(alpha[t]) };
            let low = if y[t] > 0.0 { !is_lower(alpha[t]) } else { !is_upper(alpha[t], t) };
            if up && v > gmax {
                gmax = v;
                i_sel = t;
            }
            if low && v < gmin {
                gmin = v;
                j_sel = t;
            }
        }
        gap = gmax - gmin;
        if i_sel == usize::MAX || j_sel == usize::MAX || gap < eps {
            break;
        }
        if iterations >= max_iter {
            warn!("SMO stopped after {max_iter} iterations with KKT gap {gap:.3e}");
            break;
        }
        iterations += 1;

        let (i, j) = (i_sel, j_sel);
        let (ci, cj) = (c[i], c[j]);
        let (old_i, old_j) = (alpha[i], alpha[j]);
        let qii = q(i, i);
        let qjj = q(j, j);
        let qij = q(i, j);
        if y[i] != y[j] {
            let quad = (qii + qjj + 2.0 * qij).max(TAU);
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > ci - cj {
                if alpha[i] > ci {
                    alpha[i] = ci;
                    alpha[j] = ci - diff;
                }
            } else if alpha[j] > cj {
                alpha[j] = cj;
                alpha[i] = cj + diff;
            }
        } else {
            let quad = (qii + qjj - 2.0 * qij).max(TAU);
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > ci {
                if alpha[i] > ci {
                    alpha[i] = ci;
                    alpha[j] = sum - ci;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > cj {
                if alpha[j] > cj {
                    alpha[j] = cj;
                    alpha[i] = sum - cj;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }

        let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
        for t in 0..n {
            grad[t] += q(t, i) * di + q(t, j) * dj;
        }
    }

    debug!("SMO finished after {iterations} iterations, KKT gap {gap:.2e}");
    let rho = compute_rho(&alpha, &grad, y, c);
    let objective = alpha
        .iter()
        .zip(&grad)
        .zip(prob.p)
        .map(|((a, g), p)| 0.5 * a * (g + p))
        .sum();
    Solution {
        alpha,
        rho,
        objective,
        gap,
    }
}

/// Offset from free variables, or the midpoint of the feasible interval
/// when every variable sits at a bound.
fn compute_rho(alpha: &[f64], grad: &[f64], y: &[f64], c: &[f64]) -> f64 {
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut n_free, mut sum_free) = (0usize, 0.0);
    for t in 0..alpha.len() {
        let yg = y[t] * grad[t];
        if alpha[t] >= c[t] {
            if y[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if alpha[t] <= 0.0 {
            if y[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            n_free += 1;
            sum_free += yg;
        }
    }
    if n_free > 0 {
        sum_free / n_free as f64
    } else {
        (ub + lb) / 2.0
    }
}
