//! Equal error rates, score aggregation, and the multi-class, one-class
//! and cross-session evaluation protocols.

mod aggregate;
mod eer;
mod protocols;
mod report;

pub use aggregate::{aggregate_exhaustive, aggregate_scores, draw_windows};
pub use eer::{compute_eer, rate_curve, Eer};
pub use protocols::{attempt_set, protocol_cross_session, protocol_multiclass, protocol_oneclass, AttemptSet};
pub use report::{
    bootstrap_ci, per_user_breakdown, render_boxplot_svg, BreakdownRow, Cell, Curve, EvalReport, Protocol,
    SummaryRow,
};

use serde::{Deserialize, Serialize};

use crate::models::{ModelKind, ModelParams};
use crate::select::SelectionConfig;

/// Whether windows average per-beat scores or the feature vectors
/// before scoring.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AggregateMode {
    Scores,
    Features,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    /// Aggregation window sizes.
    pub windows: Vec<usize>,
    /// Aggregated genuine attempts per user.
    pub genuine_draws: usize,
    /// Aggregated attempts drawn from each impostor user.
    pub impostor_draws: usize,
    pub aggregate: AggregateMode,
    /// Stratified folds in the multi-class protocol.
    pub folds: usize,
    /// Refit feature selection inside each multi-class training fold.
    pub select_per_fold: bool,
    /// Enrolment sample counts in the one-class protocol.
    pub enrol_sizes: Vec<usize>,
    /// Enrolment session counts in the cross-session protocol.
    pub enrol_sessions: Vec<usize>,
    /// Random enrolments per user and configuration.
    pub repeats: usize,
    /// Models evaluated in the one-class and cross-session protocols.
    pub one_class_models: Vec<ModelKind>,
    /// Bootstrap resamples for per-user confidence intervals.
    pub bootstrap: usize,
    /// Threshold samples per FAR/FRR curve in the report.
    pub curve_points: usize,
    pub models: ModelParams,
    pub selection: SelectionConfig,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            windows: vec![1, 2, 5, 10, 20],
            genuine_draws: 100,
            impostor_draws: 10,
            aggregate: AggregateMode::Scores,
            folds: 2,
            select_per_fold: true,
            enrol_sizes: vec![10, 20, 40],
            enrol_sessions: vec![1, 2, 3],
            repeats: 10,
            one_class_models: vec![ModelKind::OneClassSvm, ModelKind::IsolationForest],
            bootstrap: 1000,
            curve_points: 21,
            models: ModelParams::default(),
            selection: SelectionConfig::default(),
        }
    }
}

#[cfg(test)]
mod tests;
