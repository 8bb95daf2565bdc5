//! De-trending and low-pass filtering of raw luma traces.

mod butterworth;

use serde::{Deserialize, Serialize};

use crate::ingest::{Stage, Trace};
use crate::{Error, Result};

pub use butterworth::{Biquad, Butterworth};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterKind {
    ButterworthIir,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FilterSpec {
    pub cutoff_hz: f64,
    pub order: usize,
    pub kind: FilterKind,
}

impl Default for FilterSpec {
    fn default() -> Self {
        FilterSpec {
            cutoff_hz: 4.0,
            order: 4,
            kind: FilterKind::ButterworthIir,
        }
    }
}

/// Centred moving average over `2 * half + 1` samples. Near the edges the
/// window shrinks to the samples that exist.
pub(crate) fn centered_mean(x: &[f64], half: usize) -> Vec<f64> {
    let n = x.len();
    let mut prefix = Vec::with_capacity(n + 1);
    prefix.push(0.0);
    let mut acc = 0.0;
    for &v in x {
        acc += v;
        prefix.push(acc);
    }
    (0..n)
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half).min(n - 1);
            (prefix[hi + 1] - prefix[lo]) / (hi + 1 - lo) as f64
        })
        .collect()
}

/// Half-width of the centred window for a window length in samples. Even
/// lengths are widened by one so the window stays symmetric.
pub(crate) fn half_window(len: usize) -> usize {
    len / 2
}

/// Subtracts a centred rolling mean of `window_seconds`.
pub fn detrend(trace: &Trace, window_seconds: f64) -> Result<Trace> {
    trace.require_stage(Stage::Raw)?;
    let w = (window_seconds * trace.fps()).round();
    if !(w >= 2.0) {
        return Err(Error::invalid(format!(
            "detrend window of {window_seconds} s is under two samples"
        )));
    }
    let w = w as usize;
    if w > trace.len() {
        return Err(Error::invalid(format!(
            "detrend window of {w} samples exceeds trace length {}",
            trace.len()
        )));
    }
    let mean = centered_mean(trace.samples(), half_window(w));
    let out = trace.samples().iter().zip(&mean).map(|(x, m)| x - m).collect();
    trace.advance(out, Stage::Detrended)
}

/// Causal low-pass filtering with zero initial state. The first second of
/// output is recorded as warm-up in the trace metadata.
pub fn lowpass(trace: &Trace, spec: &FilterSpec) -> Result<Trace> {
    trace.require_stage(Stage::Detrended)?;
    let filter = match spec.kind {
        FilterKind::ButterworthIir => Butterworth::lowpass(spec.order, spec.cutoff_hz, trace.fps())?,
    };
    let out = filter.apply(trace.samples());
    let mut t = trace.advance(out, Stage::Filtered)?;
    t.meta_mut().warmup_samples = (trace.fps().round() as usize).min(trace.len());
    Ok(t)
}

/// Detrend followed by low-pass.
pub fn preprocess(trace: &Trace, window_seconds: f64, spec: &FilterSpec) -> Result<Trace> {
    lowpass(&detrend(trace, window_seconds)?, spec)
}
