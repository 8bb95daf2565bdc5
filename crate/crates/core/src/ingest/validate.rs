use serde::{Deserialize, Serialize};

use super::Trace;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    RedChannelLow,
    LumaJump,
    TooShort,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ValidationConfig {
    /// Minimum mean red value (0..255 scale) over any one-second window.
    pub red_floor: f64,
    /// Largest allowed sample-to-sample change as a fraction of the trace range.
    pub jump_frac: f64,
    pub min_seconds: f64,
}

impl Default for ValidationConfig {
    fn default() -> Self {
        ValidationConfig {
            red_floor: 30.0,
            jump_frac: 0.5,
            min_seconds: 5.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationVerdict {
    pub accepted: bool,
    pub reasons: Vec<RejectReason>,
}

/// Flags captures where the finger was lifted or the recording is too short.
///
/// `red_means` is the per-frame mean red value; the red-light check only runs
/// when it is supplied. The trace is expected to be raw luma.
pub fn validate_trace(
    trace: &Trace,
    red_means: Option<&[f64]>,
    cfg: &ValidationConfig,
) -> ValidationVerdict {
    let mut reasons = Vec::new();

    if let Some(red) = red_means.filter(|r| !r.is_empty()) {
        let w = (trace.fps().round() as usize).clamp(1, red.len());
        let mut sum: f64 = red[..w].iter().sum();
        let mut lowest = sum / w as f64;
        for i in w..red.len() {
            sum += red[i] - red[i - w];
            lowest = lowest.min(sum / w as f64);
        }
        if lowest < cfg.red_floor {
            reasons.push(RejectReason::RedChannelLow);
        }
    }

    let s = trace.samples();
    if s.len() >= 2 {
        let lo = s.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let limit = cfg.jump_frac * (hi - lo);
        if s.windows(2).any(|p| (p[1] - p[0]).abs() > limit) {
            reasons.push(RejectReason::LumaJump);
        }
    }

    if trace.duration() < cfg.min_seconds {
        reasons.push(RejectReason::TooShort);
    }

    ValidationVerdict {
        accepted: reasons.is_empty(),
        reasons,
    }
}
