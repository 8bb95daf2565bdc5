//! Beat separation, fiducial points and failure-to-acquire (FTA) gating.

mod dtw;
mod fiducial;
mod quality;

use serde::{Deserialize, Serialize};

use crate::ingest::{Stage, Trace};
use crate::preprocess::centered_mean;
use crate::{Error, Result};

pub use dtw::{dtw, dtw_cost, dtw_distance, dtw_euclidean, DtwResult};
pub use fiducial::{detect_fiducials, gradient, Confidence, FiducialSet, Landmark};
pub use quality::{
    build_reference, normalize_unit, quality_gate, resample_linear, DtwMeasure, FtaReason, QualityThresholds,
    QualityVerdict, REFERENCE_LEN,
};

/// One heartbeat cut from a filtered trace. Covers `start_index..end_index`
/// of the parent trace.
#[derive(Debug, Clone, PartialEq)]
pub struct Beat {
    pub samples: Vec<f64>,
    pub start_index: usize,
    pub end_index: usize,
    pub fps: f64,
    pub user_id: String,
    pub session_id: String,
}

impl Beat {
    pub fn new(
        samples: Vec<f64>,
        start_index: usize,
        fps: f64,
        user_id: impl Into<String>,
        session_id: impl Into<String>,
    ) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::invalid("beat has no samples"));
        }
        if !(fps.is_finite() && fps > 0.0) {
            return Err(Error::invalid(format!("fps must be positive, got {fps}")));
        }
        if samples.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("beat samples must be finite"));
        }
        Ok(Beat {
            end_index: start_index + samples.len(),
            samples,
            start_index,
            fps,
            user_id: user_id.into(),
            session_id: session_id.into(),
        })
    }

    /// Duration in seconds.
    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.fps
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SegmentConfig {
    /// Highest admissible heart rate; sets the minimum inter-beat gap.
    pub max_bpm: f64,
    /// Moving-average window in samples. `None` uses a quarter second.
    pub smoothing_window: Option<usize>,
    /// Segments longer than one beat at this rate are discarded.
    pub min_bpm: Option<f64>,
    /// Drop beats that start inside the filter warm-up region.
    pub skip_warmup: bool,
}

impl Default for SegmentConfig {
    fn default() -> Self {
        SegmentConfig {
            max_bpm: 240.0,
            smoothing_window: None,
            min_bpm: Some(30.0),
            skip_warmup: true,
        }
    }
}

/// Minimum inter-beat gap in samples, `60 * fps / max_bpm`.
pub fn min_gap(fps: f64, max_bpm: f64) -> f64 {
    60.0 * fps / max_bpm
}

pub fn default_smoothing_window(fps: f64) -> usize {
    ((0.25 * fps).round() as usize).max(1)
}

/// Strict local minima; a flat run bounded by higher values on both sides
/// counts once, at its centre.
fn relative_minima(x: &[f64]) -> Vec<usize> {
    let mut out = Vec::new();
    let mut i = 1;
    while i + 1 < x.len() {
        if x[i] < x[i - 1] {
            let mut j = i;
            while j + 1 < x.len() && x[j + 1] == x[i] {
                j += 1;
            }
            if j + 1 < x.len() && x[j + 1] > x[i] {
                out.push((i + j) / 2);
            }
            i = j + 1;
        } else {
            i += 1;
        }
    }
    out
}

/// Beat boundary indices of a filtered signal.
///
/// Relative minima of the moving average are matched to the lowest sample
/// of the signal within `g` samples on either side. Candidates closer than
/// `g` are merged, keeping the deeper one (the earlier one on ties).
pub fn beat_boundaries(signal: &[f64], fps: f64, max_bpm: f64, smoothing_window: usize) -> Vec<usize> {
    let g = min_gap(fps, max_bpm);
    let reach = g.round() as usize;
    if (signal.len() as f64) < 2.0 * g || signal.len() < 3 {
        return Vec::new();
    }
    let smoothed = centered_mean(signal, crate::preprocess::half_window(smoothing_window.max(1)));

    let mut candidates: Vec<usize> = relative_minima(&smoothed)
        .into_iter()
        .map(|i| {
            let lo = i.saturating_sub(reach);
            let hi = (i + reach).min(signal.len() - 1);
            let mut best = lo;
            for j in lo..=hi {
                if signal[j] < signal[best] {
                    best = j;
                }
            }
            best
        })
        .collect();
    candidates.sort_unstable();
    candidates.dedup();

    let mut kept: Vec<usize> = Vec::with_capacity(candidates.len());
    for c in candidates {
        match kept.last_mut() {
            Some(last) if ((c - *last) as f64) < g => {
                if signal[c] < signal[*last] {
                    *last = c;
                }
            }
            _ => kept.push(c),
        }
    }
    kept
}

/// Splits a filtered trace into beats between consecutive boundaries.
pub fn separate_beats(trace: &Trace, cfg: &SegmentConfig) -> Result<Vec<Beat>> {
    trace.require_stage(Stage::Filtered)?;
    if !(cfg.max_bpm > 0.0) {
        return Err(Error::invalid("max_bpm must be positive"));
    }
    let ws = cfg
        .smoothing_window
        .unwrap_or_else(|| default_smoothing_window(trace.fps()));
    let bounds = beat_boundaries(trace.samples(), trace.fps(), cfg.max_bpm, ws);
    let max_len = cfg.min_bpm.map(|b| 60.0 * trace.fps() / b);
    let warmup = if cfg.skip_warmup {
        trace.meta().warmup_samples
    } else {
        0
    };

    let mut beats = Vec::new();
    for pair in bounds.windows(2) {
        let (start, end) = (pair[0], pair[1]);
        if start < warmup {
            continue;
        }
        if max_len.is_some_and(|m| (end - start) as f64 > m) {
            continue;
        }
        beats.push(Beat::new(
            trace.samples()[start..end].to_vec(),
            start,
            trace.fps(),
            trace.user_id(),
            trace.session_id(),
        )?);
    }
    Ok(beats)
}
