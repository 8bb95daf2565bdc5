use rand::seq::index::sample;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{b64, check_rows};
use crate::rng::rng_for;
use crate::{Error, Result};

const LEAF: i32 = -1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IforestParams {
    pub n_trees: usize,
    /// Subsample size per tree, capped at the number of rows.
    pub max_samples: usize,
}

impl Default for IforestParams {
    fn default() -> Self {
        IforestParams {
            n_trees: 100,
            max_samples: 256,
        }
    }
}

/// Average unsuccessful-search path length in a binary search tree of `n`
/// points, `2 H(n-1) - 2 (n-1) / n`.
pub fn average_path_length(n: usize) -> f64 {
    if n < 2 {
        return 0.0;
    }
    let h: f64 = (1..n).map(|i| 1.0 / i as f64).sum();
    2.0 * h - 2.0 * (n - 1) as f64 / n as f64
}

/// An isolation tree in flat arrays; `feature[i] == -1` marks a leaf.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsolationTree {
    pub feature: Vec<i32>,
    #[serde(with = "b64::vec")]
    pub split: Vec<f64>,
    pub left: Vec<u32>,
    pub right: Vec<u32>,
    pub size: Vec<u32>,
}

impl IsolationTree {
    fn build(rows: &[Vec<f64>], idx: Vec<usize>, height_limit: usize, rng: &mut ChaCha8Rng) -> IsolationTree {
        let mut t = IsolationTree {
            feature: Vec::new(),
            split: Vec::new(),
            left: Vec::new(),
            right: Vec::new(),
            size: Vec::new(),
        };
        t.grow(rows, idx, 0, height_limit, rng);
        t
    }

    fn push_leaf(&mut self, size: usize) -> u32 {
        self.feature.push(LEAF);
        self.split.push(0.0);
        self.left.push(0);
        self.right.push(0);
        self.size.push(size as u32);
        (self.feature.len() - 1) as u32
    }

    fn grow(&mut self, rows: &[Vec<f64>], idx: Vec<usize>, depth: usize, limit: usize, rng: &mut ChaCha8Rng) -> u32 {
        if depth >= limit || idx.len() <= 1 {
            return self.push_leaf(idx.len());
        }
        let d = rows[idx[0]].len();
        let ranges: Vec<(usize, f64, f64)> = (0..d)
            .filter_map(|j| {
                let (lo, hi) = idx
                    .iter()
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &i| (lo.min(rows[i][j]), hi.max(rows[i][j])));
                (hi > lo).then_some((j, lo, hi))
            })
            .collect();
        if ranges.is_empty() {
            return self.push_leaf(idx.len());
        }
        let (feat, lo, hi) = ranges[rng.gen_range(0..ranges.len())];
        let split = rng.gen_range(lo..hi);
        let (l, r): (Vec<usize>, Vec<usize>) = idx.iter().partition(|&&i| rows[i][feat] < split);
        let node = self.push_leaf(0);
        self.feature[node as usize] = feat as i32;
        self.split[node as usize] = split;
        let li = self.grow(rows, l, depth + 1, limit, rng);
        let ri = self.grow(rows, r, depth + 1, limit, rng);
        self.left[node as usize] = li;
        self.right[node as usize] = ri;
        node
    }

    /// Path length of `x`, with the leaf-size correction.
    pub fn path_length(&self, x: &[f64]) -> f64 {
        let mut node = 0usize;
        let mut depth = 0usize;
        while self.feature[node] != LEAF {
            node = if x[self.feature[node] as usize] < self.split[node] {
                self.left[node]
            } else {
                self.right[node]
            } as usize;
            depth += 1;
        }
        depth as f64 + average_path_length(self.size[node] as usize)
    }

    pub fn height(&self) -> usize {
        fn h(t: &IsolationTree, n: usize) -> usize {
            if t.feature[n] == LEAF {
                0
            } else {
                1 + h(t, t.left[n] as usize).max(h(t, t.right[n] as usize))
            }
        }
        h(self, 0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsolationForestModel {
    pub seed: u64,
    pub psi: usize,
    pub n_trees: usize,
    /// `average_path_length(psi)`.
    pub c_psi: f64,
    pub trees: Vec<IsolationTree>,
}

impl IsolationForestModel {
    pub fn fit(rows: &[Vec<f64>], params: &IforestParams, seed: u64) -> Result<IsolationForestModel> {
        check_rows(rows)?;
        if params.n_trees == 0 || params.max_samples == 0 {
            return Err(Error::invalid("isolation forest needs trees and samples"));
        }
        let psi = params.max_samples.min(rows.len());
        let limit = (psi as f64).log2().ceil().max(0.0) as usize;
        let trees = (0..params.n_trees)
            .into_par_iter()
            .map(|t| {
                let mut rng = rng_for(seed, &[t as u64]);
                let idx = sample(&mut rng, rows.len(), psi).into_vec();
                IsolationTree::build(rows, idx, limit, &mut rng)
            })
            .collect();
        Ok(IsolationForestModel {
            seed,
            psi,
            n_trees: params.n_trees,
            c_psi: average_path_length(psi),
            trees,
        })
    }

    pub fn mean_path_length(&self, x: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.path_length(x)).sum::<f64>() / self.trees.len() as f64
    }

    /// Anomaly score `2^(-E[h(x)] / c(psi))`; higher is more anomalous.
    pub fn anomaly_score(&self, x: &[f64]) -> f64 {
        if self.c_psi <= 0.0 {
            return 0.5;
        }
        2f64.powf(-self.mean_path_length(x) / self.c_psi)
    }

    /// Genuine-oriented score, the negated anomaly score.
    pub fn score(&self, x: &[f64]) -> f64 {
        -self.anomaly_score(x)
    }
}
