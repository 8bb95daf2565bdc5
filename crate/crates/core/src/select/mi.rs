use log::warn;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Digamma function for positive arguments.
pub fn digamma(x: f64) -> f64 {
    assert!(x > 0.0, "digamma is only defined here for x > 0");
    let mut x = x;
    let mut acc = 0.0;
    while x < 10.0 {
        acc -= 1.0 / x;
        x += 1.0;
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    let series = inv2
        * (1.0 / 12.0
            - inv2 * (1.0 / 120.0 - inv2 * (1.0 / 252.0 - inv2 * (1.0 / 240.0 - inv2 * (1.0 / 132.0 - inv2 * 691.0 / 32760.0)))));
    acc + x.ln() - 0.5 * inv - series
}

/// Maps labels to dense class indices in first-seen order.
pub fn encode_labels<S: AsRef<str>>(labels: &[S]) -> Vec<usize> {
    let mut seen: Vec<&str> = Vec::new();
    labels
        .iter()
        .map(|l| {
            let l = l.as_ref();
            match seen.iter().position(|s| *s == l) {
                Some(i) => i,
                None => {
                    seen.push(l);
                    seen.len() - 1
                }
            }
        })
        .collect()
}

fn counts(x: &[usize]) -> Vec<usize> {
    let k = x.iter().copied().max().map_or(0, |m| m + 1);
    let mut c = vec![0; k];
    for &v in x {
        c[v] += 1;
    }
    c
}

/// Shannon entropy in nats of a discrete sample.
pub fn entropy(x: &[usize]) -> f64 {
    let n = x.len() as f64;
    counts(x)
        .into_iter()
        .filter(|&c| c > 0)
        .map(|c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// Plug-in mutual information in nats between two discrete samples.
pub fn discrete_mi(a: &[usize], b: &[usize]) -> f64 {
    assert_eq!(a.len(), b.len());
    let n = a.len() as f64;
    let ca = counts(a);
    let cb = counts(b);
    let mut joint = vec![0usize; ca.len() * cb.len()];
    for (&x, &y) in a.iter().zip(b) {
        joint[x * cb.len() + y] += 1;
    }
    let mut mi = 0.0;
    for (i, &na) in ca.iter().enumerate() {
        for (j, &nb) in cb.iter().enumerate() {
            let nab = joint[i * cb.len() + j];
            if nab > 0 {
                let nab = nab as f64;
                mi += nab / n * (nab * n / (na as f64 * nb as f64)).ln();
            }
        }
    }
    mi.max(0.0)
}

/// Quantile discretisation: the bin of `x` is the number of the `q - 1`
/// empirical quantile edges that are `<= x`.
pub fn quantile_bins(column: &[f64], q: usize) -> Vec<usize> {
    let n = column.len();
    if n == 0 || q < 2 {
        return vec![0; n];
    }
    let mut sorted = column.to_vec();
    sorted.sort_by(f64::total_cmp);
    let edges: Vec<f64> = (1..q).map(|j| sorted[(j * n / q).min(n - 1)]).collect();
    column
        .iter()
        .map(|x| edges.partition_point(|e| e <= x))
        .collect()
}

/// A feature index with the score it was ranked by.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scored {
    pub feature: usize,
    pub score: f64,
}

fn class_count(labels: &[usize]) -> usize {
    counts(labels).into_iter().filter(|&c| c > 0).count()
}

/// Greedy mRMR ranking with the mutual-information quotient criterion.
///
/// Returns every feature in pick order with the score it had when picked.
pub fn mrmr_rank(columns: &[Vec<f64>], labels: &[usize], bins: usize) -> Result<Vec<Scored>> {
    if class_count(labels) < 2 {
        return Err(Error::invalid("mRMR needs at least two classes"));
    }
    if columns.iter().any(|c| c.len() != labels.len()) {
        return Err(Error::invalid("column length does not match label count"));
    }
    let discrete: Vec<Vec<usize>> = columns.iter().map(|c| quantile_bins(c, bins)).collect();
    Ok(mrmr_discrete(&discrete, labels))
}

pub(crate) fn mrmr_discrete(discrete: &[Vec<usize>], labels: &[usize]) -> Vec<Scored> {
    let f = discrete.len();
    let relevance: Vec<f64> = discrete.iter().map(|d| discrete_mi(d, labels)).collect();
    let mut redundancy = vec![0.0; f];
    let mut remaining: Vec<usize> = (0..f).collect();
    let mut ranked = Vec::with_capacity(f);
    while !remaining.is_empty() {
        let picked = ranked.len();
        let score = |j: usize| {
            if picked == 0 {
                relevance[j]
            } else {
                relevance[j] / (redundancy[j] / picked as f64).max(1e-12)
            }
        };
        let (pos, best) = remaining
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |(bp, bs), (p, &j)| {
                let s = score(j);
                if s > bs {
                    (p, s)
                } else {
                    (bp, bs)
                }
            });
        let chosen = remaining.remove(pos);
        ranked.push(Scored {
            feature: chosen,
            score: best,
        });
        for &j in &remaining {
            redundancy[j] += discrete_mi(&discrete[j], &discrete[chosen]);
        }
    }
    ranked
}

/// Ross nearest-neighbour estimate of the mutual information, in nats,
/// between a continuous variable and discrete labels.
///
/// Points whose class has a single member are ignored; smaller classes
/// use `k = size - 1`. When several same-class neighbours tie at the k-th
/// distance, all of them are counted.
pub fn ross_mi(x: &[f64], labels: &[usize], k: usize) -> Result<f64> {
    if x.len() != labels.len() {
        return Err(Error::invalid("feature and label lengths differ"));
    }
    if k == 0 {
        return Err(Error::invalid("k must be at least 1"));
    }
    let sizes = counts(labels);
    let keep: Vec<usize> = (0..x.len()).filter(|&i| sizes[labels[i]] >= 2).collect();
    if keep.len() < 2 {
        return Err(Error::invalid("not enough labelled points for the estimator"));
    }
    if sizes.iter().any(|&s| s >= 2 && s < k + 1) {
        warn!("Ross MI: some classes have fewer than {} points, using reduced k", k + 1);
    }
    let n = keep.len();
    let mut all: Vec<f64> = keep.iter().map(|&i| x[i]).collect();
    all.sort_by(f64::total_cmp);

    let mut by_class: Vec<Vec<f64>> = vec![Vec::new(); sizes.len()];
    for &i in &keep {
        by_class[labels[i]].push(x[i]);
    }
    for c in by_class.iter_mut() {
        c.sort_by(f64::total_cmp);
    }

    let (mut sum_ny, mut sum_k, mut sum_m) = (0.0, 0.0, 0.0);
    for &i in &keep {
        let class = &by_class[labels[i]];
        let ki = k.min(class.len() - 1);
        let d = kth_neighbour_distance(class, x[i], ki);
        let lo = all.partition_point(|v| *v < x[i] - d);
        let hi = all.partition_point(|v| *v <= x[i] + d);
        let m = (hi - lo - 1).max(1);
        // tied neighbours at distance d all count toward k
        let kc = class.partition_point(|v| *v <= x[i] + d) - class.partition_point(|v| *v < x[i] - d) - 1;
        sum_ny += digamma(class.len() as f64);
        sum_k += digamma(kc.max(ki) as f64);
        sum_m += digamma(m as f64);
    }
    let nf = n as f64;
    Ok(digamma(nf) - sum_ny / nf + sum_k / nf - sum_m / nf)
}

/// Distance from `v` (a member of the sorted slice) to its k-th nearest
/// other member.
fn kth_neighbour_distance(sorted: &[f64], v: f64, k: usize) -> f64 {
    let pos = sorted.partition_point(|s| *s < v);
    let (mut l, mut r) = (pos as isize - 1, pos + 1);
    let mut d = 0.0;
    for _ in 0..k {
        let dl = if l >= 0 { v - sorted[l as usize] } else { f64::INFINITY };
        let dr = if r < sorted.len() { sorted[r] - v } else { f64::INFINITY };
        if dl <= dr {
            d = dl;
            l -= 1;
        } else {
            d = dr;
            r += 1;
        }
    }
    d
}

/// Relative mutual information `max(I, 0) / H(labels)` per feature, ranked
/// in descending order with ties kept in feature order.
pub fn rmi_rank(columns: &[Vec<f64>], labels: &[usize], k: usize) -> Result<Vec<Scored>> {
    if class_count(labels) < 2 {
        return Err(Error::invalid("RMI needs at least two classes"));
    }
    let h = entropy(labels);
    let mut scored = columns
        .iter()
        .enumerate()
        .map(|(j, c)| {
            Ok(Scored {
                feature: j,
                score: ross_mi(c, labels, k)?.max(0.0) / h,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    scored.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.feature.cmp(&b.feature)));
    Ok(scored)
}
