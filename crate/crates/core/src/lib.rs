//! Smartphone-camera photoplethysmography (PPG) biometric authentication.
//!
//! The pipeline runs from raw RGB frames to per-user equal-error-rate
//! reports:
//!
//! 1. [`ingest`]: luma extraction from frames, capture validation, file IO.
//! 2. [`preprocess`]: rolling-mean de-trending and a causal Butterworth low-pass.
//! 3. [`beats`]: beat separation, fiducial points, failure-to-acquire gates.
//! 4. [`features`]: the 541-dimensional per-beat descriptor.
//! 5. [`select`]: PCA compression, correlation/outlier filtering, mRMR and RMI ranking.
//! 6. [`models`]: scaler, RBF-SVM, one-class SVM and isolation forest.
//! 7. [`eval`]: EER, score aggregation and the evaluation protocols.
//!
//! [`pipeline`] ties the stages together and [`synth`] generates synthetic
//! multi-user datasets with known ground truth.

pub mod beats;
pub mod error;
pub mod eval;
pub mod features;
pub mod ingest;
pub mod models;
pub mod pipeline;
pub mod preprocess;
pub mod rng;
pub mod select;
pub mod synth;

pub use error::{Error, Result};
