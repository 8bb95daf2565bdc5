//! Per-beat feature extraction.
//!
//! Every beat maps to 541 values in a fixed order:
//!
//! | group        | count | computed on                     |
//! |--------------|-------|---------------------------------|
//! | statistical  | 4     | filtered beat samples           |
//! | widths       | 18    | 1 kHz, unit-amplitude beat      |
//! | fft          | 500   | 1 kHz, unit-amplitude beat      |
//! | fiducial     | 19    | unit-amplitude beat, unit time  |

mod matrix;

use std::sync::{Arc, LazyLock};

use log::warn;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::beats::{Beat, FiducialSet};
use crate::{Error, Result};

pub use matrix::FeatureMatrix;

pub const STATISTICAL_COUNT: usize = 4;
pub const WIDTH_COUNT: usize = 18;
pub const FFT_COUNT: usize = 500;
pub const FIDUCIAL_COUNT: usize = 19;
pub const FEATURE_COUNT: usize = STATISTICAL_COUNT + WIDTH_COUNT + FFT_COUNT + FIDUCIAL_COUNT;

/// Resampling rate of the normalized beat.
pub const NORMALIZED_RATE: f64 = 1000.0;
/// Transform length of the frequency features.
pub const DFT_LEN: usize = 1000;
/// Value substituted for a ratio whose denominator vanishes.
pub const RATIO_SENTINEL: f64 = 1e6;

pub const STATISTICAL_NAMES: [&str; STATISTICAL_COUNT] = ["max", "min", "range", "length"];
pub const FIDUCIAL_NAMES: [&str; FIDUCIAL_COUNT] = [
    "t_sp", "t_dn", "t_dp", "t_a1", "t_b1", "t_a2", "t_b2", "amp_sp", "amp_dn", "amp_dp", "a1", "b1", "a2",
    "b2", "A1", "A2", "A2_A1", "b1_a2", "dt_sd",
];

static NAMES: LazyLock<Vec<String>> = LazyLock::new(|| {
    let mut v: Vec<String> = STATISTICAL_NAMES.iter().map(|s| s.to_string()).collect();
    v.extend((0..WIDTH_COUNT).map(|i| format!("width_{i}")));
    v.extend((0..FFT_COUNT).map(|i| format!("fft_{i}")));
    v.extend(FIDUCIAL_NAMES.iter().map(|s| s.to_string()));
    v
});

/// Names of all features in vector order.
pub fn feature_names() -> &'static [String] {
    &NAMES
}

/// Column ranges of the four groups.
pub mod groups {
    use std::ops::Range;

    use super::*;

    pub const STATISTICAL: Range<usize> = 0..STATISTICAL_COUNT;
    pub const WIDTH: Range<usize> = STATISTICAL.end..STATISTICAL.end + WIDTH_COUNT;
    pub const FFT: Range<usize> = WIDTH.end..WIDTH.end + FFT_COUNT;
    pub const FIDUCIAL: Range<usize> = FFT.end..FFT.end + FIDUCIAL_COUNT;
}

/// A beat resampled to 1 kHz with amplitudes scaled to `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedBeat {
    pub samples: Vec<f64>,
    pub original_duration_s: f64,
    pub original_min: f64,
    pub original_max: f64,
}

pub fn normalize_beat(beat: &Beat) -> Result<NormalizedBeat> {
    let x = &beat.samples;
    let lo = x.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        return Err(Error::DegenerateBeat("constant beat".into()));
    }
    let duration = beat.duration();
    let m = ((duration * NORMALIZED_RATE).round() as usize).max(2);
    let last = (x.len() - 1) as f64;
    let range = hi - lo;
    let samples = (0..m)
        .map(|k| {
            let pos = (k as f64 / NORMALIZED_RATE * beat.fps).min(last);
            let i = pos.floor() as usize;
            if i + 1 < x.len() {
                x[i] + (x[i + 1] - x[i]) * (pos - i as f64)
            } else {
                x[i]
            }
        })
        .collect::<Vec<_>>();
    // rescale on the resampled values so the extremes land exactly on 0 and 1
    let rlo = samples.iter().cloned().fold(f64::INFINITY, f64::min);
    let rhi = samples.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !(rhi > rlo) {
        return Err(Error::DegenerateBeat(format!("resampled beat is flat (range {range})")));
    }
    Ok(NormalizedBeat {
        samples: samples.iter().map(|v| (v - rlo) / (rhi - rlo)).collect(),
        original_duration_s: duration,
        original_min: lo,
        original_max: hi,
    })
}

/// Maximum, minimum, their difference, and the beat length in seconds.
pub fn statistical_features(beat: &Beat) -> [f64; STATISTICAL_COUNT] {
    let lo = beat.samples.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = beat.samples.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    [hi, lo, hi - lo, beat.duration()]
}

/// The 18 evenly spaced heights in `[0.05, 0.95]`.
pub fn width_heights() -> [f64; WIDTH_COUNT] {
    std::array::from_fn(|i| 0.05 + 0.9 * i as f64 / (WIDTH_COUNT - 1) as f64)
}

/// Span in seconds between the first and last sample reaching each height.
pub fn width_features(nb: &NormalizedBeat) -> [f64; WIDTH_COUNT] {
    let s = &nb.samples;
    width_heights().map(|h| {
        let first = s.iter().position(|&v| v >= h);
        let last = s.iter().rposition(|&v| v >= h);
        match (first, last) {
            (Some(a), Some(b)) => (b - a) as f64 / NORMALIZED_RATE,
            _ => 0.0,
        }
    })
}

thread_local! {
    static FFT: Arc<dyn rustfft::Fft<f64>> = FftPlanner::new().plan_fft_forward(DFT_LEN);
}

/// Magnitudes of DFT bins 0..500 of the beat padded or cut to 1000 samples.
pub fn frequency_features(nb: &NormalizedBeat) -> Vec<f64> {
    let mut buf: Vec<Complex64> = (0..DFT_LEN)
        .map(|i| Complex64::new(nb.samples.get(i).copied().unwrap_or(0.0), 0.0))
        .collect();
    FFT.with(|fft| fft.process(&mut buf));
    buf[..FFT_COUNT].iter().map(|c| c.norm()).collect()
}

fn trapezoid(y: &[f64], dx: f64) -> f64 {
    y.windows(2).map(|w| 0.5 * (w[0] + w[1]) * dx).sum()
}

fn ratio(num: f64, den: f64, what: &str) -> f64 {
    if den.abs() < 1e-12 {
        warn!("{what}: zero denominator, using sentinel; beat should be treated as FTA");
        RATIO_SENTINEL
    } else {
        num / den
    }
}

/// Fiducial features on the unit-amplitude, unit-duration beat.
///
/// Times are fractions of the beat duration. Derivative landmarks are
/// expressed per unit amplitude per unit duration, so both are invariant to
/// heart rate and to positive affine amplitude changes.
pub fn fiducial_features(beat: &Beat, fid: &FiducialSet, nb: &NormalizedBeat) -> [f64; FIDUCIAL_COUNT] {
    let n = beat.len() as f64;
    let range = nb.original_max - nb.original_min;
    let t = |i: usize| i as f64 / n;
    let amp = |i: usize| (beat.samples[i] - nb.original_min) / range;
    let slope = |v: f64| v * n / range;

    let m = nb.samples.len();
    let dn_nb = ((t(fid.dn.index) * m as f64).round() as usize).min(m - 1);
    let dx = 1.0 / m as f64;
    let area1 = trapezoid(&nb.samples[..=dn_nb], dx);
    let area2 = trapezoid(&nb.samples[dn_nb..], dx);
    let (a1, b1, a2, b2) = (
        slope(fid.a1.value),
        slope(fid.b1.value),
        slope(fid.a2.value),
        slope(fid.b2.value),
    );

    [
        t(fid.sp.index),
        t(fid.dn.index),
        t(fid.dp.index),
        t(fid.a1.index),
        t(fid.b1.index),
        t(fid.a2.index),
        t(fid.b2.index),
        amp(fid.sp.index),
        amp(fid.dn.index),
        amp(fid.dp.index),
        a1,
        b1,
        a2,
        b2,
        area1,
        area2,
        ratio(area2, area1, "A2/A1"),
        ratio(b1, a2, "b1/a2"),
        t(fid.dp.index) - t(fid.sp.index),
    ]
}

/// A named 541-value beat descriptor.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub user_id: String,
    pub session_id: String,
    pub fta: bool,
}

impl FeatureVector {
    pub fn names(&self) -> &'static [String] {
        feature_names()
    }
}

/// Concatenates the four groups. `fta` is left false for the caller to set.
pub fn extract_all(beat: &Beat, fid: &FiducialSet) -> Result<FeatureVector> {
    let nb = normalize_beat(beat)?;
    let mut values = Vec::with_capacity(FEATURE_COUNT);
    values.extend(statistical_features(beat));
    values.extend(width_features(&nb));
    values.extend(frequency_features(&nb));
    values.extend(fiducial_features(beat, fid, &nb));
    debug_assert_eq!(values.len(), FEATURE_COUNT);
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::DegenerateBeat(format!("feature {} is not finite", feature_names()[i])));
    }
    Ok(FeatureVector {
        values,
        user_id: beat.user_id.clone(),
        session_id: beat.session_id.clone(),
        fta: false,
    })
}
