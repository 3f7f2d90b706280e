//! Objective metrics: affect alignment, dynamic-plan adherence and plan
//! consistency, plus the loudness, tempo and audio-affect analyses they
//! rest on.

mod affect;
mod loudness;
mod plan_cons;
mod report;
pub mod stats;
mod tempo;

pub use affect::{estimate_affect, pitch_class_histogram, EstimatorConfig};
pub use loudness::{loudness_curve, LoudnessCurve, Normalization};
pub use plan_cons::{plan_cons, PlanCons, PlanConsConfig};
pub use report::{evaluate_clip, evaluate_with_affect, write_table_csv, MetricReport, TableRow};
pub use tempo::estimate_tempo;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::decoder::AffectState;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("section {0} spans zero samples")]
    EmptySection(usize),
    #[error("clip has no sections")]
    NoSections,
    #[error("clip is empty")]
    EmptyClip,
    #[error("clip is {0:.2} s; tempo estimation needs at least 2 s")]
    TooShort(f64),
    #[error("no periodicity in onset envelope")]
    NoPeriodicity,
    #[error("plan has {plan} sections but clip has {clip}")]
    SectionMismatch { plan: usize, clip: usize },
    #[error(transparent)]
    Stats(#[from] stats::StatsError),
}

/// `0.5 * ((v - v*)^2 + (a - a*)^2)`.
pub fn emo_mse(estimated: AffectState, target: AffectState) -> f64 {
    let dv = estimated.valence - target.valence;
    let da = estimated.arousal - target.arousal;
    0.5 * (dv * dv + da * da)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DynCorr {
    /// `None` exactly when `degenerate`.
    pub value: Option<f64>,
    /// Either side has zero variance.
    pub degenerate: bool,
}

/// Pearson correlation of planned dynamics and realized section loudness.
pub fn dyn_corr(planned: &[f64], realized: &LoudnessCurve) -> Result<DynCorr, MetricsError> {
    match stats::pearson(planned, &realized.values) {
        Ok(r) => Ok(DynCorr { value: Some(r), degenerate: false }),
        Err(stats::StatsError::Degenerate) => Ok(DynCorr { value: None, degenerate: true }),
        Err(e) => Err(e.into()),
    }
}
