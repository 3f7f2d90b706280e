use serde::{Deserialize, Serialize};

use super::{estimate_tempo, loudness_curve, MetricsError};
use crate::engine::{AudioClip, Score};
use crate::planner::InterventionPlan;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanConsConfig {
    pub tempo_tolerance_bpm: f64,
    /// Relative band around the planned melody notes per beat.
    pub density_band: f64,
    pub trend_fraction: f64,
    /// Planned steps smaller than this are not scored.
    pub trend_dont_care: f64,
}

impl Default for PlanConsConfig {
    fn default() -> Self {
        Self { tempo_tolerance_bpm: 8.0, density_band: 0.35, trend_fraction: 0.75, trend_dont_care: 0.02 }
    }
}

/// `None` marks a check that does not apply.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanCons {
    pub score: f64,
    pub tempo_ok: bool,
    pub density_ok: Option<bool>,
    pub trend_ok: Option<bool>,
    pub estimated_tempo_bpm: Option<f64>,
}

/// Mean of the applicable indicator checks.
///
/// - tempo: estimated tempo within tolerance of the plan; a clip without a
///   detectable tempo fails.
/// - density: melody notes per beat in the score within the band around
///   the beat-weighted mean of `density * (1 + 0.5 * a(tau_i))`.
/// - trend: enough section steps where realized RMS moves the same way as
///   the planned dynamics; skipped when every planned step is negligible.
pub fn plan_cons(
    plan: &InterventionPlan,
    clip: &AudioClip,
    score: &Score,
    cfg: &PlanConsConfig,
) -> Result<PlanCons, MetricsError> {
    if clip.n_sections() != plan.sections || score.sections.len() != plan.sections {
        return Err(MetricsError::SectionMismatch { plan: plan.sections, clip: clip.n_sections() });
    }
    let estimated = match estimate_tempo(clip) {
        Ok(t) => Some(t),
        Err(MetricsError::NoPeriodicity | MetricsError::TooShort(_)) => None,
        Err(e) => return Err(e),
    };
    let tempo_ok = estimated.is_some_and(|t| (t - plan.tempo_bpm).abs() <= cfg.tempo_tolerance_bpm);

    let beats: Vec<f64> = score.sections.iter().map(|s| s.beats()).collect();
    let total_beats: f64 = beats.iter().sum();
    let density_ok = (total_beats > 0.0).then(|| {
        let planned = plan
            .target_traj
            .points()
            .iter()
            .zip(&beats)
            .map(|(p, b)| plan.density * (1.0 + 0.5 * p.state.arousal) * b)
            .sum::<f64>()
            / total_beats;
        let realized = score.melody_notes() as f64 / total_beats;
        (realized - planned).abs() <= cfg.density_band * planned
    });

    let realized = loudness_curve(clip)?.values;
    let (mut agree, mut scored) = (0usize, 0usize);
    for i in 1..plan.sections {
        let dd = plan.dynamics[i] - plan.dynamics[i - 1];
        if dd.abs() < cfg.trend_dont_care {
            continue;
        }
        scored += 1;
        let dr = realized[i] - realized[i - 1];
        if dr != 0.0 && dr.signum() == dd.signum() {
            agree += 1;
        }
    }
    let trend_ok = (scored > 0).then(|| agree as f64 >= cfg.trend_fraction * scored as f64);

    let checks: Vec<bool> = [Some(tempo_ok), density_ok, trend_ok].into_iter().flatten().collect();
    let score = checks.iter().filter(|&&c| c).count() as f64 / checks.len() as f64;
    Ok(PlanCons { score, tempo_ok, density_ok, trend_ok, estimated_tempo_bpm: estimated })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decoder::{AffectState, AffectTrajectory};
    use crate::engine::{compose, derive_controls, generate, render};
    use crate::planner::{synthesize_plan, PlanConfig};

    fn plan(start: (f64, f64), target: (f64, f64)) -> InterventionPlan {
        let s = AffectState::new(start.0, start.1);
        let cfg = PlanConfig { alpha_plan: 1.0, ..Default::default() };
        synthesize_plan(s, &AffectTrajectory::constant(s), AffectState::new(target.0, target.1), &[], &cfg).unwrap()
    }

    #[test]
    fn own_render_scores_one() {
        for (i, (s, t)) in [((-0.5, 0.6), (0.5, -0.4)), ((0.2, -0.8), (0.4, 0.7)), ((0.0, 0.0), (0.9, 0.9))]
            .into_iter()
            .enumerate()
        {
            let p = plan(s, t);
            let (score, clip) = generate(&p, AffectState::NEUTRAL, i as u64, 16_000).unwrap();
            let pc = plan_cons(&p, &clip, &score, &PlanConsConfig::default()).unwrap();
            assert_eq!(pc.score, 1.0, "{pc:?} tempo {}", p.tempo_bpm);
        }
    }

    #[test]
    fn silence_fails_everything_applicable() {
        let p = plan((-0.5, 0.6), (0.5, -0.4));
        let (score, mut clip) = generate(&p, AffectState::NEUTRAL, 0, 8000).unwrap();
        clip.samples.iter_mut().for_each(|x| *x = 0.0);
        let mut empty = score.clone();
        empty.sections.iter_mut().for_each(|s| s.events.clear());
        let pc = plan_cons(&p, &clip, &empty, &PlanConsConfig::default()).unwrap();
        assert_eq!((pc.tempo_ok, pc.density_ok, pc.trend_ok), (false, Some(false), Some(false)));
        assert_eq!(pc.score, 0.0);
    }

    #[test]
    fn tempo_off_by_twenty_scores_two_thirds() {
        let p = plan((-0.5, 0.6), (0.5, -0.4));
        let (g, mut sections) = derive_controls(&p, AffectState::NEUTRAL, 0).unwrap();
        sections.iter_mut().for_each(|s| s.tempo_bpm += 20.0);
        let score = compose(&g, &sections, p.duration_s, 0);
        let clip = render(&score, 16_000);
        let pc = plan_cons(&p, &clip, &score, &PlanConsConfig::default()).unwrap();
        assert!(!pc.tempo_ok);
        assert_eq!(pc.density_ok, Some(true));
        assert_eq!(pc.trend_ok, Some(true));
        assert!((pc.score - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn flat_dynamics_skip_trend() {
        let p = plan((0.3, 0.2), (0.3, 0.2));
        let (score, clip) = generate(&p, AffectState::NEUTRAL, 5, 8000).unwrap();
        let pc = plan_cons(&p, &clip, &score, &PlanConsConfig::default()).unwrap();
        assert_eq!(pc.trend_ok, None);
    }

    #[test]
    fn section_mismatch() {
        let p = plan((0.3, 0.2), (0.3, 0.2));
        let (score, mut clip) = generate(&p, AffectState::NEUTRAL, 5, 8000).unwrap();
        clip.section_starts.pop();
        assert!(matches!(
            plan_cons(&p, &clip, &score, &PlanConsConfig::default()),
            Err(MetricsError::SectionMismatch { .. })
        ));
    }
}
