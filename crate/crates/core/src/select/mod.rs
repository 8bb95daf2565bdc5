//! Feature selection: PCA compression of the spectral and width groups,
//! correlation filtering, percentile clipping, and the intersection of
//! mRMR and relative-mutual-information rankings.

mod mi;
mod pca;

use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use log::{info, warn};
use rand::Rng;
use serde::{Deserialize, Serialize};

pub use mi::{digamma, discrete_mi, encode_labels, entropy, mrmr_rank, quantile_bins, rmi_rank, ross_mi, Scored};
pub use pca::Pca;

use crate::features::{feature_names, groups, FeatureMatrix, FIDUCIAL_NAMES, STATISTICAL_NAMES};
use crate::rng::rng_for;
use crate::{Error, Result};

const CORRELATION_STREAM: u64 = 0xC0DD;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SelectionConfig {
    /// Components fitted on the spectral group before variance truncation.
    pub fft_components: usize,
    /// Components fitted on the width group before variance truncation.
    pub width_components: usize,
    /// Cumulative explained-variance ratio the retained components reach.
    pub variance_target: f64,
    /// Absolute Pearson correlation above which one of a pair is dropped.
    pub correlation_threshold: f64,
    /// Lower and upper percentiles for outlier handling.
    pub clip_percentiles: (f64, f64),
    /// Fraction of each ranking kept before intersecting.
    pub keep_fraction: f64,
    /// Quantile bins used to discretise features for mRMR.
    pub mrmr_bins: usize,
    /// Neighbour count for the relative mutual information estimator.
    pub rmi_k: usize,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        SelectionConfig {
            fft_components: 100,
            width_components: 15,
            variance_target: 0.99,
            correlation_threshold: 0.95,
            clip_percentiles: (1.0, 99.0),
            keep_fraction: 0.6,
            mrmr_bins: 8,
            rmi_k: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipBound {
    pub feature: String,
    pub lo: f64,
    pub hi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedScore {
    pub feature: String,
    pub score: f64,
}

/// A fitted selection, replayable on unseen rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionModel {
    pub seed: u64,
    pub config: SelectionConfig,
    pub fft_pca: Pca,
    pub width_pca: Pca,
    /// Feature names after PCA compression.
    pub reduced_names: Vec<String>,
    pub dropped_correlated: Vec<String>,
    pub clip_bounds: Vec<ClipBound>,
    /// mRMR pick order with the score at pick time.
    pub mrmr_scores: Vec<NamedScore>,
    /// Relative mutual information, descending.
    pub rmi_scores: Vec<NamedScore>,
    pub selected: Vec<String>,
}

/// Pearson correlation; zero when either column is constant.
pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa <= 0.0 || sbb <= 0.0 {
        0.0
    } else {
        sab / (saa * sbb).sqrt()
    }
}

/// Greedy correlation filter over columns in their given order.
///
/// For every surviving pair with `|r| > threshold` a seeded coin decides
/// which of the two is dropped. Returns the dropped column indices, sorted.
pub fn correlation_filter(columns: &[Vec<f64>], threshold: f64, seed: u64) -> Vec<usize> {
    let mut rng = rng_for(seed, &[CORRELATION_STREAM]);
    let f = columns.len();
    let mut dropped = vec![false; f];
    for i in 0..f {
        if dropped[i] {
            continue;
        }
        for j in i + 1..f {
            if dropped[j] {
                continue;
            }
            if pearson(&columns[i], &columns[j]).abs() > threshold {
                if rng.gen_bool(0.5) {
                    dropped[i] = true;
                    break;
                }
                dropped[j] = true;
            }
        }
    }
    (0..f).filter(|&i| dropped[i]).collect()
}

/// Linear-interpolated percentile of sorted data, `p` in [0, 100].
pub fn percentile(sorted: &[f64], p: f64) -> f64 {
    let pos = p / 100.0 * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Per-column percentile bounds and the rows with every value inside them.
pub fn percentile_clip(columns: &[Vec<f64>], lo: f64, hi: f64) -> (Vec<usize>, Vec<(f64, f64)>) {
    let n = columns.first().map_or(0, Vec::len);
    let bounds: Vec<(f64, f64)> = columns
        .iter()
        .map(|c| {
            let mut s = c.clone();
            s.sort_by(f64::total_cmp);
            (percentile(&s, lo), percentile(&s, hi))
        })
        .collect();
    let kept = (0..n)
        .filter(|&i| columns.iter().zip(&bounds).all(|(c, (l, h))| c[i] >= *l && c[i] <= *h))
        .collect();
    (kept, bounds)
}

/// Number of entries kept from a ranking of `n`.
pub fn keep_count(n: usize, fraction: f64) -> usize {
    ((fraction * n as f64 - 1e-9).ceil().max(0.0) as usize).min(n)
}

/// Features present in both kept lists, ordered by mRMR score (descending,
/// ties in pick order).
pub fn finalize(mrmr_kept: &[Scored], rmi_kept: &[Scored]) -> Result<Vec<Scored>> {
    let rmi: BTreeSet<usize> = rmi_kept.iter().map(|s| s.feature).collect();
    let mut out: Vec<Scored> = mrmr_kept.iter().filter(|s| rmi.contains(&s.feature)).copied().collect();
    if out.is_empty() {
        return Err(Error::SelectionEmpty);
    }
    out.sort_by(|a, b| b.score.total_cmp(&a.score));
    Ok(out)
}

fn columns_of(rows: &[Vec<f64>], idx: impl Iterator<Item = usize> + Clone) -> Vec<Vec<f64>> {
    idx.map(|j| rows.iter().map(|r| r[j]).collect()).collect()
}

impl SelectionModel {
    /// Fits the selection on training rows carrying the full feature layout.
    pub fn fit(train: &FeatureMatrix, cfg: &SelectionConfig, seed: u64) -> Result<SelectionModel> {
        if train.names.as_slice() != feature_names() {
            return Err(Error::invalid("selection expects the full extracted feature layout"));
        }
        if train.n_rows() < 3 {
            return Err(Error::invalid("too few training rows for selection"));
        }
        if train.rows.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite feature values"));
        }
        let sub = |range: std::ops::Range<usize>| -> Vec<Vec<f64>> {
            train.rows.iter().map(|r| r[range.clone()].to_vec()).collect()
        };
        let fft_pca = Pca::fit(&sub(groups::FFT), cfg.fft_components, cfg.variance_target)?;
        let width_pca = Pca::fit(&sub(groups::WIDTH), cfg.width_components, cfg.variance_target)?;
        info!(
            "PCA retained {} spectral and {} width components",
            fft_pca.n_retained, width_pca.n_retained
        );

        let mut model = SelectionModel {
            seed,
            config: cfg.clone(),
            reduced_names: reduced_names(&fft_pca, &width_pca),
            fft_pca,
            width_pca,
            dropped_correlated: Vec::new(),
            clip_bounds: Vec::new(),
            mrmr_scores: Vec::new(),
            rmi_scores: Vec::new(),
            selected: Vec::new(),
        };
        let reduced: Vec<Vec<f64>> = train.rows.iter().map(|r| model.reduce(r)).collect();
        let all_cols = columns_of(&reduced, 0..model.reduced_names.len());

        let dropped = correlation_filter(&all_cols, cfg.correlation_threshold, seed);
        model.dropped_correlated = dropped.iter().map(|&j| model.reduced_names[j].clone()).collect();
        let survivors: Vec<usize> = (0..all_cols.len()).filter(|j| !dropped.contains(j)).collect();
        let cols: Vec<Vec<f64>> = survivors.iter().map(|&j| all_cols[j].clone()).collect();

        let (lo, hi) = cfg.clip_percentiles;
        let (kept_rows, bounds) = percentile_clip(&cols, lo, hi);
        model.clip_bounds = survivors
            .iter()
            .zip(&bounds)
            .map(|(&j, &(lo, hi))| ClipBound {
                feature: model.reduced_names[j].clone(),
                lo,
                hi,
            })
            .collect();
        let labels_all = encode_labels(&train.user_ids);
        let (stat_cols, labels) = if kept_rows.len() < 2 * cols.len().max(1) || {
            let l: Vec<usize> = kept_rows.iter().map(|&i| labels_all[i]).collect();
            l.iter().collect::<BTreeSet<_>>().len() < 2
        } {
            warn!(
                "outlier removal leaves {} of {} rows, ranking on all rows",
                kept_rows.len(),
                train.n_rows()
            );
            (cols.clone(), labels_all.clone())
        } else {
            let c = cols.iter().map(|c| kept_rows.iter().map(|&i| c[i]).collect()).collect();
            (c, kept_rows.iter().map(|&i| labels_all[i]).collect())
        };

        let mrmr = mrmr_rank(&stat_cols, &labels, cfg.mrmr_bins)?;
        let rmi = rmi_rank(&stat_cols, &labels, cfg.rmi_k)?;
        let keep = keep_count(survivors.len(), cfg.keep_fraction);
        let chosen = finalize(&mrmr[..keep], &rmi[..keep])?;

        let name = |s: &Scored| model.reduced_names[survivors[s.feature]].clone();
        model.mrmr_scores = mrmr.iter().map(|s| NamedScore { feature: name(s), score: s.score }).collect();
        model.rmi_scores = rmi.iter().map(|s| NamedScore { feature: name(s), score: s.score }).collect();
        model.selected = chosen.iter().map(name).collect();
        info!("selected {} features", model.selected.len());
        Ok(model)
    }

    /// Maps a full feature row to the PCA-compressed layout.
    pub fn reduce(&self, row: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.reduced_names.len());
        out.extend_from_slice(&row[groups::STATISTICAL]);
        out.extend(self.width_pca.transform(&row[groups::WIDTH]));
        out.extend(self.fft_pca.transform(&row[groups::FFT]));
        out.extend_from_slice(&row[groups::FIDUCIAL]);
        out
    }

    /// Reusable column plan mapping reduced features to selected outputs.
    fn plan(&self) -> Vec<(usize, f64, f64)> {
        let pos: HashMap<&str, usize> = self.reduced_names.iter().enumerate().map(|(i, n)| (n.as_str(), i)).collect();
        let bounds: HashMap<&str, (f64, f64)> =
            self.clip_bounds.iter().map(|b| (b.feature.as_str(), (b.lo, b.hi))).collect();
        self.selected
            .iter()
            .map(|n| {
                let (lo, hi) = bounds.get(n.as_str()).copied().unwrap_or((f64::NEG_INFINITY, f64::INFINITY));
                (pos[n.as_str()], lo, hi)
            })
            .collect()
    }

    /// Selected features of one full row, clamped to the training bounds.
    pub fn transform_row(&self, row: &[f64]) -> Vec<f64> {
        let reduced = self.reduce(row);
        self.plan().into_iter().map(|(j, lo, hi)| reduced[j].clamp(lo, hi)).collect()
    }

    pub fn transform(&self, m: &FeatureMatrix) -> Result<FeatureMatrix> {
        if m.names.as_slice() != feature_names() {
            return Err(Error::invalid("transform expects the full extracted feature layout"));
        }
        let plan = self.plan();
        let rows = m
            .rows
            .iter()
            .map(|r| {
                let reduced = self.reduce(r);
                plan.iter().map(|&(j, lo, hi)| reduced[j].clamp(lo, hi)).collect()
            })
            .collect();
        Ok(FeatureMatrix {
            names: self.selected.clone(),
            rows,
            user_ids: m.user_ids.clone(),
            session_ids: m.session_ids.clone(),
            fta: m.fta.clone(),
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<SelectionModel> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

fn reduced_names(fft: &Pca, width: &Pca) -> Vec<String> {
    let mut names: Vec<String> = STATISTICAL_NAMES.iter().map(|s| s.to_string()).collect();
    names.extend((0..width.n_retained).map(|i| format!("width_pc{i}")));
    names.extend((0..fft.n_retained).map(|i| format!("fft_pc{i}")));
    names.extend(FIDUCIAL_NAMES.iter().map(|s| s.to_string()));
    names
}

#[cfg(test)]
mod tests;
