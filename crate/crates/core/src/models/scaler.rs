use serde::{Deserialize, Serialize};

use super::b64;
use crate::{Error, Result};

/// Per-feature standardisation fitted on training rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    #[serde(with = "b64::vec")]
    pub mean: Vec<f64>,
    /// Population standard deviation; zero for constant features.
    #[serde(with = "b64::vec")]
    pub sd: Vec<f64>,
}

impl Scaler {
    pub fn fit(rows: &[Vec<f64>]) -> Result<Scaler> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::invalid("cannot fit a scaler on no rows"));
        }
        let d = rows[0].len();
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::invalid("ragged rows"));
        }
        let mut mean = vec![0.0; d];
        for r in rows {
            for (m, v) in mean.iter_mut().zip(r) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        let mut sd = vec![0.0; d];
        for r in rows {
            for ((s, v), m) in sd.iter_mut().zip(r).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        sd.iter_mut().for_each(|s| *s = (*s / n as f64).sqrt());
        Ok(Scaler { mean, sd })
    }

    pub fn transform(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.mean)
            .zip(&self.sd)
            .map(|((v, m), s)| if *s > 0.0 { (v - m) / s } else { v - m })
            .collect()
    }

    pub fn transform_rows(&self, rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
        rows.iter().map(|r| self.transform(r)).collect()
    }

    pub fn inverse(&self, z: &[f64]) -> Vec<f64> {
        z.iter()
            .zip(&self.mean)
            .zip(&self.sd)
            .map(|((v, m), s)| if *s > 0.0 { v * s + m } else { v + m })
            .collect()
    }
}
