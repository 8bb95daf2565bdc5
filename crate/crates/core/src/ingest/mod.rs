//! Frame streams, luma traces and capture validation.

mod io;
mod luma;
mod validate;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use io::{
    parse_red_means_csv, parse_trace_csv, read_frames_raw, read_red_means_csv, read_trace_csv,
    write_frames_raw, write_red_means_csv, write_trace_csv, FRAME_MAGIC,
};
pub use luma::{extract_luma, red_channel_means, LUMA_WEIGHTS};
pub use validate::{validate_trace, RejectReason, ValidationConfig, ValidationVerdict};

/// Capture-time motion cutoff of the acquisition app, in m/s² (1.3 g).
///
/// Recorded for reference only: traces carry no accelerometer data, so the
/// pipeline never enforces it.
pub const MAX_CAPTURE_ACCELERATION: f64 = 12.75;

/// One RGB8 frame stored as three planes of `width * height` bytes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub r: Vec<u8>,
    pub g: Vec<u8>,
    pub b: Vec<u8>,
}

impl Frame {
    /// A frame where every pixel has the same colour.
    pub fn solid(width: u32, height: u32, rgb: [u8; 3]) -> Self {
        let n = (width * height) as usize;
        Frame {
            r: vec![rgb[0]; n],
            g: vec![rgb[1]; n],
            b: vec![rgb[2]; n],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameStream {
    width: u32,
    height: u32,
    fps: f64,
    frames: Vec<Frame>,
}

impl FrameStream {
    pub fn new(width: u32, height: u32, fps: f64, frames: Vec<Frame>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid("frame dimensions must be non-zero"));
        }
        if !(fps.is_finite() && fps > 0.0) {
            return Err(Error::invalid(format!("fps must be positive, got {fps}")));
        }
        if frames.is_empty() {
            return Err(Error::invalid("frame stream is empty"));
        }
        let n = width as usize * height as usize;
        for (i, f) in frames.iter().enumerate() {
            if f.r.len() != n || f.g.len() != n || f.b.len() != n {
                return Err(Error::invalid(format!(
                    "frame {i} has planes of length {}/{}/{}, expected {n}",
                    f.r.len(),
                    f.g.len(),
                    f.b.len()
                )));
            }
        }
        Ok(FrameStream {
            width,
            height,
            fps,
            frames,
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn fps(&self) -> f64 {
        self.fps
    }

    pub fn frames(&self) -> &[Frame] {
        &self.frames
    }
}

/// Processing stage of a trace. Transitions only move forward.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Raw,
    Detrended,
    Filtered,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Raw => "raw",
            Stage::Detrended => "detrended",
            Stage::Filtered => "filtered",
        }
    }

    pub fn parse(s: &str) -> Option<Stage> {
        match s {
            "raw" => Some(Stage::Raw),
            "detrended" => Some(Stage::Detrended),
            "filtered" => Some(Stage::Filtered),
            _ => None,
        }
    }
}

/// Provenance carried alongside a trace.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TraceMeta {
    /// Dimensions of the frames the luma was computed from, if known.
    pub frame_size: Option<(u32, u32)>,
    /// Leading samples affected by the filter's zero initial state.
    pub warmup_samples: usize,
}

/// A uniformly sampled luma series for one capture session.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    samples: Vec<f64>,
    fps: f64,
    user_id: String,
    session_id: String,
    stage: Stage,
    meta: TraceMeta,
}

impl Trace {
    pub fn new(
        samples: Vec<f64>,
        fps: f64,
        user_id: impl Into<String>,
        session_id: impl Into<String>,
        stage: Stage,
    ) -> Result<Self> {
        if !(fps.is_finite() && fps > 0.0) {
            return Err(Error::invalid(format!("fps must be positive, got {fps}")));
        }
        if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("sample {i} is not finite")));
        }
        Ok(Trace {
            samples,
            fps,
            user_id: user_id.into(),
            session_id: session_id.into(),
            stage,
            meta: TraceMeta::default(),
        })
    }

    pub fn with_identity(mut self, user_id: impl Into<String>, session_id: impl Into<String>) -> Self {
        self.user_id = user_id.into();
        self.session_id = session_id.into();
        self
    }

    pub fn with_meta(mut self, meta: TraceMeta) -> Self {
        self.meta = meta;
        self
    }

    /// Replaces the samples and advances the stage. Used by the
    /// preprocessing operations.
    pub(crate) fn advance(&self, samples: Vec<f64>, stage: Stage) -> Result<Trace> {
        if stage <= self.stage {
            return Err(Error::Stage {
                expected: stage,
                found: self.stage,
            });
        }
        let mut t = Trace::new(samples, self.fps, self.user_id.clone(), self.session_id.clone(), stage)?;
        t.meta = self.meta.clone();
        Ok(t)
    }

    pub(crate) fn meta_mut(&mut self) -> &mut TraceMeta {
        &mut self.meta
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn fps(&self) -> f64 {
        self.fps
    }

    pub fn user_id(&self) -> &str {
        &self.user_id
    }

    pub fn session_id(&self) -> &str {
        &self.session_id
    }

    pub fn stage(&self) -> Stage {
        self.stage
    }

    pub fn meta(&self) -> &TraceMeta {
        &self.meta
    }

    /// Duration in seconds.
    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.fps
    }

    pub(crate) fn require_stage(&self, stage: Stage) -> Result<()> {
        if self.stage != stage {
            return Err(Error::Stage {
                expected: stage,
                found: self.stage,
            });
        }
        Ok(())
    }
}
