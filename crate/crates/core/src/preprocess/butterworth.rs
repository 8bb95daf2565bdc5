//! Butterworth low-pass design by bilinear transform with frequency
//! pre-warping, realised as cascaded second-order sections.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::{Error, Result};

/// Second-order section with `a0 = 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 3],
}

impl Biquad {
    fn response(&self, z_inv: Complex64) -> Complex64 {
        let z2 = z_inv * z_inv;
        (self.b[0] + z_inv * self.b[1] + z2 * self.b[2]) / (self.a[0] + z_inv * self.a[1] + z2 * self.a[2])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Butterworth {
    sections: Vec<Biquad>,
    poles: Vec<Complex64>,
    fs: f64,
}

impl Butterworth {
    pub fn lowpass(order: usize, cutoff_hz: f64, fs: f64) -> Result<Self> {
        if order == 0 {
            return Err(Error::invalid("filter order must be at least 1"));
        }
        if !(cutoff_hz > 0.0 && cutoff_hz < fs / 2.0) {
            return Err(Error::invalid(format!(
                "cutoff {cutoff_hz} Hz must lie in (0, {}) Hz",
                fs / 2.0
            )));
        }
        let fs2 = 2.0 * fs;
        let warped = fs2 * (PI * cutoff_hz / fs).tan();
        let n = order as f64;
        let digital = |k: usize| {
            let theta = PI * (2.0 * k as f64 + n + 1.0) / (2.0 * n);
            let p = Complex64::from_polar(warped, theta);
            (fs2 + p) / (fs2 - p)
        };

        let mut sections = Vec::with_capacity(order.div_ceil(2));
        let mut poles = Vec::with_capacity(order);
        for k in 0..order / 2 {
            let z = digital(k);
            poles.push(z);
            poles.push(z.conj());
            let a = [1.0, -2.0 * z.re, z.norm_sqr()];
            let gain = (a[0] + a[1] + a[2]) / 4.0;
            sections.push(Biquad {
                b: [gain, 2.0 * gain, gain],
                a,
            });
        }
        if order % 2 == 1 {
            let z = digital(order / 2);
            poles.push(z);
            let a = [1.0, -z.re, 0.0];
            let gain = (1.0 - z.re) / 2.0;
            sections.push(Biquad {
                b: [gain, gain, 0.0],
                a,
            });
        }

        if let Some(p) = poles.iter().find(|p| p.norm() >= 1.0) {
            return Err(Error::invalid(format!("unstable filter pole {p}")));
        }
        Ok(Butterworth { sections, poles, fs })
    }

    pub fn sections(&self) -> &[Biquad] {
        &self.sections
    }

    pub fn poles(&self) -> &[Complex64] {
        &self.poles
    }

    /// Magnitude of the frequency response at `freq_hz`.
    pub fn magnitude(&self, freq_hz: f64) -> f64 {
        let z_inv = Complex64::from_polar(1.0, -2.0 * PI * freq_hz / self.fs);
        self.sections
            .iter()
            .fold(Complex64::new(1.0, 0.0), |h, s| h * s.response(z_inv))
            .norm()
    }

    /// Filters `x` from a zero initial state (transposed direct form II).
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = x.to_vec();
        for s in &self.sections {
            let (mut z1, mut z2) = (0.0, 0.0);
            for v in y.iter_mut() {
                let input = *v;
                let out = s.b[0] * input + z1;
                z1 = s.b[1] * input - s.a[1] * out + z2;
                z2 = s.b[2] * input - s.a[2] * out;
                *v = out;
            }
        }
        y
    }
}
