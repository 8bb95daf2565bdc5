//! Systolic peak, dicrotic notch, diastolic peak and first-derivative
//! landmarks of a single beat.

use serde::{Deserialize, Serialize};

use super::Beat;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Confidence {
    Exact,
    Fallback,
}

/// A sample index within the beat and the value there. For the
/// first-derivative landmarks the value is the derivative.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Landmark {
    pub index: usize,
    pub value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FiducialSet {
    pub sp: Landmark,
    pub dn: Landmark,
    pub dp: Landmark,
    pub a1: Landmark,
    pub b1: Landmark,
    pub a2: Landmark,
    pub b2: Landmark,
    pub confidence: Confidence,
}

/// Central differences in the interior, one-sided at the ends.
pub fn gradient(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    match n {
        0 => Vec::new(),
        1 => vec![0.0],
        _ => (0..n)
            .map(|i| {
                if i == 0 {
                    x[1] - x[0]
                } else if i == n - 1 {
                    x[n - 1] - x[n - 2]
                } else {
                    (x[i + 1] - x[i - 1]) / 2.0
                }
            })
            .collect(),
    }
}

fn first_local_max(x: &[f64], after: usize) -> Option<usize> {
    (after + 1..x.len().saturating_sub(1)).find(|&i| x[i - 1] < x[i] && x[i] >= x[i + 1])
}

fn first_local_min(x: &[f64], after: usize) -> Option<usize> {
    (after + 1..x.len().saturating_sub(1)).find(|&i| x[i - 1] > x[i] && x[i] <= x[i + 1])
}

/// First index after `after` where `x` changes sign from positive to
/// non-positive.
fn first_down_crossing(x: &[f64], after: usize) -> Option<usize> {
    (after + 1..x.len()).find(|&i| x[i - 1] > 0.0 && x[i] <= 0.0)
}

fn argmax(x: &[f64], range: std::ops::Range<usize>) -> usize {
    let mut best = range.start;
    for i in range {
        if x[i] > x[best] {
            best = i;
        }
    }
    best
}

fn argmin(x: &[f64], range: std::ops::Range<usize>) -> usize {
    let mut best = range.start;
    for i in range {
        if x[i] < x[best] {
            best = i;
        }
    }
    best
}

/// Locates the fiducial points of a beat.
///
/// The exact path reads the landmarks off local extrema of the signal and
/// its first derivative. When the morphology lacks a feature (no notch, no
/// second derivative wave) the missing points fall back to the shoulder
/// inflection or to positional guesses and the set is marked
/// [`Confidence::Fallback`]. Every index lies inside the beat.
pub fn detect_fiducials(beat: &Beat) -> FiducialSet {
    let x = &beat.samples;
    let n = x.len();
    let last = n.saturating_sub(1);
    let d1 = gradient(x);
    let d2 = gradient(&d1);
    let mut exact = true;

    let sp = argmax(x, 0..n);
    let a1 = argmax(&d1, 0..sp + 1);

    let notch = first_local_min(x, sp);
    let mut b1 = first_local_min(&d1, sp).unwrap_or_else(|| {
        if sp < last {
            argmin(&d1, sp + 1..n)
        } else {
            sp
        }
    });
    let dn = match notch {
        Some(dn) => {
            if b1 > dn {
                b1 = argmin(&d1, sp + 1..dn + 1);
            }
            dn
        }
        None => {
            exact = false;
            first_down_crossing(&d2, b1).unwrap_or((sp + last) / 2).max(sp)
        }
    };

    let dp = match first_local_max(x, dn) {
        Some(dp) => dp,
        None => {
            exact = false;
            if dn < last {
                argmax(x, dn + 1..n)
            } else {
                dn
            }
        }
    };

    let a2 = match first_local_max(&d1, b1) {
        Some(i) => i,
        None => {
            exact = false;
            dp
        }
    };
    let b2 = match first_local_min(&d1, a2) {
        Some(i) => i,
        None => {
            exact = false;
            (dp + last) / 2
        }
    };

    let at = |i: usize| Landmark { index: i, value: x[i] };
    let slope = |i: usize| Landmark { index: i, value: d1[i] };
    FiducialSet {
        sp: at(sp),
        dn: at(dn),
        dp: at(dp),
        a1: slope(a1),
        b1: slope(b1),
        a2: slope(a2),
        b2: slope(b2),
        confidence: if exact {
            Confidence::Exact
        } else {
            Confidence::Fallback
        },
    }
}
