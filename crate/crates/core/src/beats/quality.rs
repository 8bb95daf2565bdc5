//! Failure-to-acquire gating against a reference beat template.

use serde::{Deserialize, Serialize};

use super::dtw::{dtw, dtw_euclidean};
use super::Beat;
use crate::preprocess::centered_mean;
use crate::{Error, Result};

/// Length every beat is resampled to before template comparison.
pub const REFERENCE_LEN: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FtaReason {
    MaxBpm,
    PeakCount,
    DtwDistance,
}

impl FtaReason {
    pub fn as_str(self) -> &'static str {
        match self {
            FtaReason::MaxBpm => "max_bpm",
            FtaReason::PeakCount => "peak_count",
            FtaReason::DtwDistance => "dtw_distance",
        }
    }
}

/// How the warping distance to the reference is reported.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DtwMeasure {
    /// Total cost along the optimal path.
    Cumulative,
    /// Total cost divided by the path length (bounded by 1 on unit beats).
    PathMean,
    /// Root of the summed squared differences along the path that
    /// minimises them.
    Euclidean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QualityThresholds {
    pub max_bpm: f64,
    pub max_peaks: usize,
    /// Moving-average length applied before counting peaks.
    pub peak_smoothing: usize,
    /// Minimum peak prominence as a fraction of the smoothed beat's range.
    pub min_prominence: f64,
    pub dtw_threshold: f64,
    pub dtw_measure: DtwMeasure,
}

impl Default for QualityThresholds {
    fn default() -> Self {
        QualityThresholds {
            max_bpm: 120.0,
            max_peaks: 3,
            peak_smoothing: 5,
            min_prominence: 0.02,
            dtw_threshold: 2.0,
            dtw_measure: DtwMeasure::Euclidean,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityVerdict {
    pub fta: bool,
    pub reasons: Vec<FtaReason>,
    pub dtw_value: f64,
}

/// Linear interpolation of `x` onto `len` evenly spaced points spanning the
/// same support.
pub fn resample_linear(x: &[f64], len: usize) -> Vec<f64> {
    match (x.len(), len) {
        (_, 0) => Vec::new(),
        (0, _) => vec![0.0; len],
        (1, _) => vec![x[0]; len],
        (n, 1) => vec![x[n / 2]],
        (n, _) => {
            let step = (n - 1) as f64 / (len - 1) as f64;
            (0..len)
                .map(|k| {
                    let pos = k as f64 * step;
                    let i = (pos.floor() as usize).min(n - 2);
                    let frac = pos - i as f64;
                    x[i] + (x[i + 1] - x[i]) * frac
                })
                .collect()
        }
    }
}

/// Min-max scaling to `[0, 1]`. Constant input maps to zeros.
pub fn normalize_unit(x: &[f64]) -> Vec<f64> {
    let lo = x.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let range = hi - lo;
    if range > 0.0 {
        x.iter().map(|v| (v - lo) / range).collect()
    } else {
        vec![0.0; x.len()]
    }
}

fn template_shape(beat: &[f64]) -> Vec<f64> {
    normalize_unit(&resample_linear(beat, REFERENCE_LEN))
}

/// Pointwise mean of all beats after resampling and unit scaling.
pub fn build_reference(beats: &[Beat]) -> Result<Vec<f64>> {
    if beats.is_empty() {
        return Err(Error::invalid("reference needs at least one beat"));
    }
    let mut acc = vec![0.0; REFERENCE_LEN];
    for b in beats {
        for (a, v) in acc.iter_mut().zip(template_shape(&b.samples)) {
            *a += v;
        }
    }
    let n = beats.len() as f64;
    Ok(acc.into_iter().map(|v| v / n).collect())
}

/// Counts strict local maxima whose topographic prominence reaches
/// `min_prominence` times the signal range.
fn count_peaks(x: &[f64], min_prominence: f64) -> usize {
    let n = x.len();
    if n < 3 {
        return 0;
    }
    let lo = x.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let floor = min_prominence * (hi - lo);
    let mut count = 0;
    for i in 1..n - 1 {
        if !(x[i] > x[i - 1] && x[i] > x[i + 1]) {
            continue;
        }
        let mut left_min = x[i];
        for j in (0..i).rev() {
            if x[j] > x[i] {
                break;
            }
            left_min = left_min.min(x[j]);
        }
        let mut right_min = x[i];
        for &v in &x[i + 1..] {
            if v > x[i] {
                break;
            }
            right_min = right_min.min(v);
        }
        let prominence = x[i] - left_min.max(right_min);
        if prominence > 0.0 && prominence >= floor {
            count += 1;
        }
    }
    count
}

/// Applies the heart-rate, peak-count and template-distance rules.
pub fn quality_gate(beat: &Beat, reference: &[f64], th: &QualityThresholds) -> Result<QualityVerdict> {
    if reference.is_empty() {
        return Err(Error::invalid("empty reference template"));
    }
    let mut reasons = Vec::new();

    let bpm = 60.0 * beat.fps / beat.len() as f64;
    if bpm > th.max_bpm {
        reasons.push(FtaReason::MaxBpm);
    }

    let smoothed = centered_mean(&beat.samples, th.peak_smoothing / 2);
    if count_peaks(&smoothed, th.min_prominence) > th.max_peaks {
        reasons.push(FtaReason::PeakCount);
    }

    let shape = template_shape(&beat.samples);
    let dtw_value = match th.dtw_measure {
        DtwMeasure::Cumulative => dtw(&shape, reference)?.cost,
        DtwMeasure::PathMean => dtw(&shape, reference)?.normalized(),
        DtwMeasure::Euclidean => dtw_euclidean(&shape, reference)?,
    };
    if dtw_value > th.dtw_threshold {
        reasons.push(FtaReason::DtwDistance);
    }

    Ok(QualityVerdict {
        fta: !reasons.is_empty(),
        reasons,
        dtw_value,
    })
}
