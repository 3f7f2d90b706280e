use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{
    dyn_corr, emo_mse, estimate_affect, loudness_curve, plan_cons, EstimatorConfig, MetricsError, PlanConsConfig,
};
use crate::decoder::AffectState;
use crate::engine::{AudioClip, Score};
use crate::planner::InterventionPlan;

/// Per-clip metrics. `fad` and `clap_sim` are never computed here; they
/// exist so external tools can merge their scores into the same record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub emo_mse: f64,
    pub dyn_corr: Option<f64>,
    pub dyn_corr_degenerate: bool,
    pub plan_cons: f64,
    pub estimated_va: AffectState,
    pub estimated_tempo_bpm: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fad: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clap_sim: Option<f64>,
}

/// All metrics for one rendered plan, Emo-MSE against `target`.
pub fn evaluate_clip(
    plan: &InterventionPlan,
    score: &Score,
    clip: &AudioClip,
    target: AffectState,
    estimator: &EstimatorConfig,
    consistency: &PlanConsConfig,
) -> Result<MetricReport, MetricsError> {
    let (va, _) = estimate_affect(clip, Some(score), estimator)?;
    evaluate_with_affect(plan, score, clip, target, va, consistency)
}

/// As [`evaluate_clip`] with the clip's affect supplied by the caller.
pub fn evaluate_with_affect(
    plan: &InterventionPlan,
    score: &Score,
    clip: &AudioClip,
    target: AffectState,
    estimated: AffectState,
    consistency: &PlanConsConfig,
) -> Result<MetricReport, MetricsError> {
    let dc = dyn_corr(&plan.dynamics, &loudness_curve(clip)?)?;
    let pc = plan_cons(plan, clip, score, consistency)?;
    Ok(MetricReport {
        emo_mse: emo_mse(estimated, target),
        dyn_corr: dc.value,
        dyn_corr_degenerate: dc.degenerate,
        plan_cons: pc.score,
        estimated_va: estimated,
        estimated_tempo_bpm: pc.estimated_tempo_bpm,
        fad: None,
        clap_sim: None,
    })
}

/// One row of the benchmark table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TableRow {
    #[serde(rename = "Method")]
    pub method: String,
    #[serde(rename = "Plan")]
    pub plan: usize,
    #[serde(rename = "Seed")]
    pub seed: u64,
    #[serde(rename = "FAD")]
    pub fad: Option<f64>,
    #[serde(rename = "CLAP-Sim")]
    pub clap_sim: Option<f64>,
    #[serde(rename = "Emo-MSE")]
    pub emo_mse: f64,
    #[serde(rename = "Dyn-Corr")]
    pub dyn_corr: Option<f64>,
    #[serde(rename = "Plan-Cons")]
    pub plan_cons: f64,
}

pub fn write_table_csv<W: Write>(out: W, rows: &[TableRow]) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_header_and_empty_columns() {
        let rows = vec![TableRow {
            method: "full".into(),
            plan: 0,
            seed: 7,
            fad: None,
            clap_sim: None,
            emo_mse: 0.125,
            dyn_corr: Some(0.9),
            plan_cons: 1.0,
        }];
        let mut buf = Vec::new();
        write_table_csv(&mut buf, &rows).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "Method,Plan,Seed,FAD,CLAP-Sim,Emo-MSE,Dyn-Corr,Plan-Cons\nfull,0,7,,,0.125,0.9,1.0\n");
    }
}
