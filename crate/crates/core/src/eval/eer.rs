use crate::{Error, Result};

/// Equal error rate and the threshold where it occurs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Eer {
    pub eer: f64,
    pub threshold: f64,
}

/// False accept and false reject rates at every distinct score, plus a
/// final point above all scores. Genuine scores are higher.
pub fn rate_curve(genuine: &[f64], impostor: &[f64]) -> Vec<(f64, f64, f64)> {
    let mut g = genuine.to_vec();
    let mut im = impostor.to_vec();
    g.sort_by(f64::total_cmp);
    im.sort_by(f64::total_cmp);
    let mut thresholds: Vec<f64> = g.iter().chain(&im).copied().collect();
    thresholds.sort_by(f64::total_cmp);
    thresholds.dedup();
    thresholds.push(f64::INFINITY);
    let (ng, ni) = (g.len() as f64, im.len() as f64);
    thresholds
        .into_iter()
        .map(|t| {
            let far = (im.len() - im.partition_point(|v| *v < t)) as f64 / ni;
            let frr = g.partition_point(|v| *v < t) as f64 / ng;
            (t, far, frr)
        })
        .collect()
}

/// Sweeps the threshold over the merged scores and returns the point
/// where FAR and FRR cross, interpolated linearly between the thresholds
/// that bracket the sign change.
pub fn compute_eer(genuine: &[f64], impostor: &[f64]) -> Result<Eer> {
    if genuine.is_empty() || impostor.is_empty() {
        return Err(Error::invalid("EER needs genuine and impostor scores"));
    }
    if genuine.iter().chain(impostor).any(|v| !v.is_finite()) {
        return Err(Error::invalid("EER scores must be finite"));
    }
    Ok(crossing(&rate_curve(genuine, impostor)))
}

pub(crate) fn crossing(curve: &[(f64, f64, f64)]) -> Eer {
    let k = curve
        .iter()
        .position(|(_, far, frr)| far - frr <= 0.0)
        .expect("the last point has FAR 0 and FRR 1");
    let (t, far, frr) = curve[k];
    if far == frr {
        // equal over a run of thresholds: report the middle of the run
        let mut end = k;
        while end + 1 < curve.len() && curve[end + 1].1 == curve[end + 1].2 && curve[end + 1].0.is_finite() {
            end += 1;
        }
        let hi = curve[end].0;
        let threshold = if hi.is_finite() { 0.5 * (t + hi) } else { t };
        return Eer { eer: far, threshold };
    }
    if k == 0 {
        return Eer { eer: 0.5 * (far + frr), threshold: t };
    }
    let (t0, far0, frr0) = curve[k - 1];
    let d0 = far0 - frr0;
    let d1 = far - frr;
    let a = d0 / (d0 - d1);
    let threshold = if t.is_finite() { t0 + a * (t - t0) } else { t0 };
    Eer {
        eer: far0 + a * (far - far0),
        threshold,
    }
}
