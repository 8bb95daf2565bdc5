//! Synthetic PPG generator: parameterised beat morphology (systolic wave,
//! dicrotic notch, diastolic wave), per-user parameter sets, per-session
//! drift, and optional rendering to video frames.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::ingest::{Frame, FrameStream, Stage, Trace};
use crate::rng::rng_for;
use crate::{Error, Result};

/// Shape of one beat over phase `[0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Morphology {
    /// Phase of the systolic peak.
    pub systolic_phase: f64,
    /// Height of the diastolic wave relative to the systolic wave.
    pub diastolic_amp: f64,
    pub diastolic_phase: f64,
    pub diastolic_width: f64,
    pub bpm: f64,
    /// Pulse amplitude in luma units.
    pub amplitude: f64,
}

impl Default for Morphology {
    fn default() -> Self {
        Morphology {
            systolic_phase: 0.17,
            diastolic_amp: 0.4,
            diastolic_phase: 0.47,
            diastolic_width: 0.07,
            bpm: 70.0,
            amplitude: 2.0,
        }
    }
}

/// Weight of the slow diastolic run-off that carries each beat down into
/// the next onset.
const RUNOFF: f64 = 0.5;

const RANGES: [(f64, f64); 6] = [
    (0.12, 0.20),
    (0.25, 0.55),
    (0.42, 0.56),
    (0.045, 0.075),
    (58.0, 88.0),
    (1.5, 3.0),
];

impl Morphology {
    fn to_array(self) -> [f64; 6] {
        [
            self.systolic_phase,
            self.diastolic_amp,
            self.diastolic_phase,
            self.diastolic_width,
            self.bpm,
            self.amplitude,
        ]
    }

    fn from_array(a: [f64; 6]) -> Self {
        Morphology {
            systolic_phase: a[0],
            diastolic_amp: a[1],
            diastolic_phase: a[2],
            diastolic_width: a[3],
            bpm: a[4],
            amplitude: a[5],
        }
    }

    /// Unit-amplitude pulse value at phase `phi`; zero at both ends with the
    /// trough at phase 0.
    pub fn pulse(&self, phi: f64) -> f64 {
        let raw = |p: f64| {
            let r = p / self.systolic_phase;
            let systolic = (r * (1.0 - r).exp()).powi(2);
            let z = (p - self.diastolic_phase) / self.diastolic_width;
            systolic + self.diastolic_amp * (-0.5 * z * z).exp() + RUNOFF * p.sqrt() * (1.0 - p)
        };
        let (f0, f1) = (raw(0.0), raw(1.0));
        raw(phi) - ((1.0 - phi) * f0 + phi * f1)
    }
}

/// Per-user morphologies spread over the parameter ranges on a seeded
/// Latin hypercube, so that every parameter takes distinct values.
pub fn user_morphologies(users: usize, seed: u64) -> Vec<Morphology> {
    let mut rng = rng_for(seed, &[0x5EED, users as u64]);
    let perms: Vec<Vec<usize>> = (0..RANGES.len())
        .map(|_| {
            let mut p: Vec<usize> = (0..users).collect();
            p.shuffle(&mut rng);
            p
        })
        .collect();
    (0..users)
        .map(|u| {
            let mut a = [0.0; 6];
            for (k, (lo, hi)) in RANGES.iter().enumerate() {
                a[k] = lo + (perms[k][u] as f64 + 0.5) / users as f64 * (hi - lo);
            }
            Morphology::from_array(a)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub users: usize,
    pub sessions: usize,
    /// Recording length per session.
    pub seconds: f64,
    pub fps: f64,
    /// Pulse-to-noise ratio of the white sensor noise.
    pub snr_db: f64,
    /// Per-session parameter shift, in units of the spacing between users.
    pub session_drift: f64,
    /// Relative standard deviation of beat-to-beat interval changes.
    pub rr_jitter: f64,
    /// Relative standard deviation of beat-to-beat shape changes.
    pub shape_jitter: f64,
    /// Mean luma level.
    pub baseline: f64,
    /// Amplitude of the slow baseline wander.
    pub wander: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            users: 15,
            sessions: 4,
            seconds: 60.0,
            fps: 240.0,
            snr_db: 30.0,
            session_drift: 0.0,
            rr_jitter: 0.03,
            shape_jitter: 0.02,
            baseline: 120.0,
            wander: 2.0,
        }
    }
}

/// A raw trace with the sample index of every generated beat onset.
#[derive(Debug, Clone)]
pub struct SynthTrace {
    pub trace: Trace,
    pub onsets: Vec<usize>,
    pub morphology: Morphology,
}

fn shifted(base: Morphology, rng: &mut ChaCha8Rng, scale: f64, users: usize) -> Morphology {
    let mut a = base.to_array();
    for (v, (lo, hi)) in a.iter_mut().zip(RANGES) {
        let step = (hi - lo) / users.max(1) as f64;
        *v += scale * step * rng.sample::<f64, _>(StandardNormal);
        *v = v.clamp(lo - 0.5 * (hi - lo), hi + 0.5 * (hi - lo));
    }
    a[0] = a[0].max(0.05);
    a[3] = a[3].max(0.02);
    a[5] = a[5].max(0.2);
    Morphology::from_array(a)
}

/// Clean pulse train and the onset index of each beat.
pub fn pulse_signal(
    m: &Morphology,
    fps: f64,
    seconds: f64,
    rr_jitter: f64,
    shape_jitter: f64,
    rng: &mut ChaCha8Rng,
) -> (Vec<f64>, Vec<usize>) {
    let n = (seconds * fps).round() as usize;
    let mut x = vec![0.0; n];
    let mut onsets = Vec::new();
    let mut t = 0.0;
    while t < seconds {
        let period = 60.0 / m.bpm * (1.0 + rr_jitter * rng.sample::<f64, _>(StandardNormal)).max(0.5);
        let mut beat = *m;
        beat.systolic_phase *= 1.0 + shape_jitter * rng.sample::<f64, _>(StandardNormal);
        beat.diastolic_amp *= 1.0 + shape_jitter * rng.sample::<f64, _>(StandardNormal);
        beat.diastolic_phase *= 1.0 + shape_jitter * rng.sample::<f64, _>(StandardNormal);
        let start = (t * fps).round() as usize;
        let end = (((t + period) * fps).round() as usize).min(n);
        if start >= n {
            break;
        }
        onsets.push(start);
        for (i, v) in x.iter_mut().enumerate().take(end).skip(start) {
            let phi = (i as f64 / fps - t) / period;
            *v = m.amplitude * beat.pulse(phi.clamp(0.0, 1.0));
        }
        t += period;
    }
    (x, onsets)
}

/// Adds white noise at the given signal-to-noise ratio (power, in dB).
pub fn add_noise(x: &mut [f64], snr_db: f64, rng: &mut ChaCha8Rng) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let power = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let sd = (power / 10f64.powf(snr_db / 10.0)).sqrt();
    for v in x.iter_mut() {
        *v += sd * rng.sample::<f64, _>(StandardNormal);
    }
}

/// Raw traces for every user and session.
pub fn synth_dataset(cfg: &SynthConfig, seed: u64) -> Result<Vec<SynthTrace>> {
    if cfg.users == 0 || cfg.sessions == 0 || !(cfg.fps > 0.0) || !(cfg.seconds > 0.0) {
        return Err(Error::invalid("synthetic dataset needs users, sessions, fps and length"));
    }
    let users = user_morphologies(cfg.users, seed);
    let mut out = Vec::with_capacity(cfg.users * cfg.sessions);
    for (u, base) in users.iter().enumerate() {
        for s in 0..cfg.sessions {
            let mut rng = rng_for(seed, &[0x5E55, u as u64, s as u64]);
            let m = if cfg.session_drift > 0.0 {
                shifted(*base, &mut rng, cfg.session_drift, cfg.users)
            } else {
                *base
            };
            let (mut x, onsets) = pulse_signal(&m, cfg.fps, cfg.seconds, cfg.rr_jitter, cfg.shape_jitter, &mut rng);
            add_noise(&mut x, cfg.snr_db, &mut rng);
            let phase: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
            for (i, v) in x.iter_mut().enumerate() {
                let t = i as f64 / cfg.fps;
                *v += cfg.baseline + cfg.wander * (std::f64::consts::TAU * 0.1 * t + phase).sin();
            }
            let trace = Trace::new(x, cfg.fps, user_name(u), session_name(s), Stage::Raw)?;
            out.push(SynthTrace {
                trace,
                onsets,
                morphology: m,
            });
        }
    }
    Ok(out)
}

pub fn user_name(u: usize) -> String {
    format!("user{u:02}")
}

pub fn session_name(s: usize) -> String {
    format!("s{s:02}")
}

/// Renders a trace as grey frames whose mean luma reproduces the samples
/// to within `1 / (width * height)`.
pub fn render_frames(trace: &Trace, width: u32, height: u32) -> Result<FrameStream> {
    let pixels = (width * height) as usize;
    let frames = trace
        .samples()
        .iter()
        .map(|&v| {
            let v = v.clamp(0.0, 255.0);
            let total = (v * pixels as f64).round() as usize;
            let base = (total / pixels).min(255);
            let extra = if base == 255 { 0 } else { total - base * pixels };
            let plane: Vec<u8> = (0..pixels).map(|i| (base + usize::from(i < extra)) as u8).collect();
            Frame {
                r: plane.clone(),
                g: plane.clone(),
                b: plane,
            }
        })
        .collect();
    FrameStream::new(width, height, trace.fps(), frames)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::extract_luma;

    #[test]
    fn pulse_is_anchored_and_peaks_at_systole() {
        let m = Morphology::default();
        assert!(m.pulse(0.0).abs() < 1e-12);
        assert!(m.pulse(1.0).abs() < 1e-12);
        let grid: Vec<f64> = (0..=1000).map(|i| m.pulse(i as f64 / 1000.0)).collect();
        let peak = (0..grid.len()).fold(0, |b, i| if grid[i] > grid[b] { i } else { b });
        assert!((peak as f64 / 1000.0 - m.systolic_phase).abs() < 0.02);
        assert!(grid.iter().all(|v| *v >= -1e-12));
        // a notch between the two waves
        let notch = (peak + 1..900).find(|&i| grid[i] < grid[i - 1] && grid[i] <= grid[i + 1]);
        assert!(notch.is_some());
    }

    #[test]
    fn users_are_spread_and_deterministic() {
        let a = user_morphologies(15, 3);
        assert_eq!(a, user_morphologies(15, 3));
        let mut bpms: Vec<f64> = a.iter().map(|m| m.bpm).collect();
        bpms.sort_by(f64::total_cmp);
        for w in bpms.windows(2) {
            assert!((w[1] - w[0] - 2.0).abs() < 1e-9);
        }
    }

    #[test]
    fn every_user_has_a_notch() {
        for m in user_morphologies(15, 1) {
            let grid: Vec<f64> = (0..=1000).map(|i| m.pulse(i as f64 / 1000.0)).collect();
            let peak = (0..grid.len()).fold(0, |b, i| if grid[i] > grid[b] { i } else { b });
            assert!((peak + 1..999).any(|i| grid[i] < grid[i - 1] && grid[i] <= grid[i + 1]), "{m:?}");
        }
    }

    #[test]
    fn onsets_follow_heart_rate() {
        let mut rng = rng_for(1, &[]);
        let m = Morphology {
            bpm: 60.0,
            ..Default::default()
        };
        let (x, on) = pulse_signal(&m, 240.0, 10.0, 0.0, 0.0, &mut rng);
        assert_eq!(x.len(), 2400);
        assert_eq!(on, (0..10).map(|k| k * 240).collect::<Vec<_>>());
    }

    #[test]
    fn noise_hits_requested_snr() {
        let mut rng = rng_for(2, &[]);
        let (clean, _) = pulse_signal(&Morphology::default(), 240.0, 30.0, 0.0, 0.0, &mut rng);
        let mut noisy = clean.clone();
        add_noise(&mut noisy, 20.0, &mut rng);
        let mean = clean.iter().sum::<f64>() / clean.len() as f64;
        let p: f64 = clean.iter().map(|v| (v - mean).powi(2)).sum();
        let e: f64 = clean.iter().zip(&noisy).map(|(a, b)| (a - b).powi(2)).sum();
        let snr = 10.0 * (p / e).log10();
        assert!((snr - 20.0).abs() < 0.3, "{snr}");
    }

    #[test]
    fn frames_round_trip_through_luma() {
        let cfg = SynthConfig {
            users: 1,
            sessions: 1,
            seconds: 2.0,
            ..Default::default()
        };
        let t = &synth_dataset(&cfg, 5).unwrap()[0].trace;
        let frames = render_frames(t, 8, 8).unwrap();
        let back = extract_luma(&frames).unwrap();
        for (a, b) in back.samples().iter().zip(t.samples()) {
            assert!((a - b).abs() <= 0.5 / 64.0 + 1e-9);
        }
    }

    #[test]
    fn dataset_shape_and_determinism() {
        let cfg = SynthConfig {
            users: 3,
            sessions: 2,
            seconds: 5.0,
            ..Default::default()
        };
        let a = synth_dataset(&cfg, 9).unwrap();
        let b = synth_dataset(&cfg, 9).unwrap();
        assert_eq!(a.len(), 6);
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.trace, y.trace);
        }
        assert_eq!(a[3].trace.user_id(), "user01");
        assert_eq!(a[3].trace.session_id(), "s01");
    }
}
