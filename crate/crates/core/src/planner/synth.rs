use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::{
    tokenize, InterventionPlan, KnowledgeBase, KnowledgeEntry, Mode, MusicalAttributes, PlannerError,
    Quadrant, Voice,
};
use crate::decoder::{AffectState, AffectTrajectory, TrajectoryPoint};

/// Additive score bonus for entries tagged with the current quadrant.
pub const QUADRANT_BOOST: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Retrieved {
    pub entry: KnowledgeEntry,
    pub score: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanConfig {
    pub sections: usize,
    pub duration_s: f64,
    /// Planning-time step toward the target, in `(0, 1]`.
    pub alpha_plan: f64,
    pub allow_fallback: bool,
}

impl Default for PlanConfig {
    fn default() -> Self {
        Self { sections: 4, duration_s: 10.0, alpha_plan: 0.5, allow_fallback: true }
    }
}

fn level(x: f64) -> &'static str {
    if x >= 0.0 {
        "high"
    } else {
        "low"
    }
}

/// Query text from the current and target quadrants plus the direction of
/// travel, e.g. `low valence high arousal calming transition ...`.
pub fn build_query(state: AffectState, target: AffectState) -> String {
    let mut words = vec![
        level(state.valence),
        "valence",
        level(state.arousal),
        "arousal",
    ];
    let dv = target.valence - state.valence;
    let da = target.arousal - state.arousal;
    if da < -0.05 {
        words.extend(["calming", "relaxation"]);
    } else if da > 0.05 {
        words.extend(["energizing", "activation"]);
    }
    if dv > 0.05 {
        words.push("uplifting");
    } else if dv < -0.05 {
        words.push("reflective");
    }
    if dv.abs() <= 0.05 && da.abs() <= 0.05 {
        words.extend(["maintain", "stable"]);
    }
    words.push("transition");
    words.extend(["toward", level(target.valence), "valence", level(target.arousal), "arousal"]);
    words.join(" ")
}

/// Top-`k` entries by BM25 (k1 = 1.2, b = 0.75) plus the quadrant bonus;
/// ties go to the smaller id.
pub fn retrieve(
    kb: &KnowledgeBase,
    state: AffectState,
    target: AffectState,
    k: usize,
) -> Result<Vec<Retrieved>, PlannerError> {
    if kb.is_empty() {
        return Err(PlannerError::EmptyKnowledgeBase);
    }
    if k == 0 {
        return Err(PlannerError::InvalidRequest("k must be at least 1".into()));
    }
    let mut terms = tokenize(&build_query(state, target));
    terms.sort();
    terms.dedup();
    let quadrant = Quadrant::of(state);
    let index = kb.index();
    let mut scored: Vec<(usize, f64)> = kb
        .entries()
        .iter()
        .enumerate()
        .map(|(i, e)| {
            let bonus = if e.has_tag(quadrant) { QUADRANT_BOOST } else { 0.0 };
            (i, index.score(&terms, i) + bonus)
        })
        .collect();
    scored.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .unwrap_or(Ordering::Equal)
            .then_with(|| kb.entries()[a.0].id.cmp(&kb.entries()[b.0].id))
    });
    Ok(scored
        .into_iter()
        .take(k)
        .map(|(i, score)| Retrieved { entry: kb.entries()[i].clone(), score })
        .collect())
}

/// Tempo from start arousal: 60 BPM at -1, 120 BPM at +1.
pub fn arousal_tempo(arousal: f64) -> f64 {
    60.0 + 60.0 * (arousal + 1.0) / 2.0
}

/// Section dynamic level tracking target arousal, in `[0.3, 0.8]`.
pub fn arousal_dynamic(arousal: f64) -> f64 {
    0.3 + 0.5 * (arousal + 1.0) / 2.0
}

fn clip_tempo(b: f64, retrieved: &[Retrieved]) -> f64 {
    let ranges: Vec<(f64, f64)> =
        retrieved.iter().filter_map(|r| r.entry.attributes.tempo_range_bpm).collect();
    if ranges.is_empty() {
        return b;
    }
    let lo = ranges.iter().map(|r| r.0).fold(f64::MIN, f64::max);
    let hi = ranges.iter().map(|r| r.1).fold(f64::MAX, f64::min);
    // disjoint ranges: the best-ranked entry decides
    let (lo, hi) = if lo <= hi { (lo, hi) } else { ranges[0] };
    b.clamp(lo, hi)
}

fn pick_instruments(retrieved: &[Retrieved]) -> Vec<Voice> {
    let mut out = Vec::new();
    for tag in retrieved.iter().flat_map(|r| r.entry.attributes.instruments.iter()) {
        if let Some(v) = Voice::from_tag(tag) {
            if !out.contains(&v) && out.len() < 3 {
                out.push(v);
            }
        }
    }
    if out.is_empty() {
        out = vec![Voice::SinePad, Voice::Pluck, Voice::SoftNoisePerc];
    }
    out
}

fn trend_word(traj: &AffectTrajectory) -> &'static str {
    let d = traj.last().arousal - traj.first().arousal;
    if d > 0.05 {
        "rising"
    } else if d < -0.05 {
        "falling"
    } else {
        "steady"
    }
}

/// Deterministic plan from the decoded state, its recent trajectory, the
/// target and the retrieved guidance.
///
/// The target trajectory starts at `state` and ends at
/// `clamp(state + alpha_plan * (target - state))`; retrieved guidance clips
/// tempo and can override the mode.
pub fn synthesize_plan(
    state: AffectState,
    traj: &AffectTrajectory,
    target: AffectState,
    retrieved: &[Retrieved],
    cfg: &PlanConfig,
) -> Result<InterventionPlan, PlannerError> {
    if retrieved.is_empty() && !cfg.allow_fallback {
        return Err(PlannerError::NoApplicableKnowledge);
    }
    if cfg.sections == 0 {
        return Err(PlannerError::InvalidRequest("sections must be at least 1".into()));
    }
    if !(cfg.alpha_plan > 0.0 && cfg.alpha_plan <= 1.0) {
        return Err(PlannerError::InvalidRequest(format!("alpha_plan {} outside (0, 1]", cfg.alpha_plan)));
    }
    if !(cfg.duration_s.is_finite() && cfg.duration_s > 0.0) {
        return Err(PlannerError::InvalidRequest("duration must be positive".into()));
    }
    let l = cfg.sections;

    let tempo_bpm = clip_tempo(arousal_tempo(state.arousal), retrieved).clamp(40.0, 200.0);

    let mode = retrieved
        .first()
        .and_then(|r| r.entry.attributes.mode)
        .unwrap_or(if target.valence >= 0.0 { Mode::Major } else { Mode::Minor });

    let hints: Vec<f64> = retrieved.iter().filter_map(|r| r.entry.attributes.density_hint).collect();
    let density = if hints.is_empty() {
        0.5
    } else {
        let lo = hints.iter().copied().fold(f64::MAX, f64::min);
        let hi = hints.iter().copied().fold(f64::MIN, f64::max);
        (lo + hi) / 2.0
    };

    let end = state.toward(target, cfg.alpha_plan);
    let section_s = cfg.duration_s / l as f64;
    let points: Vec<TrajectoryPoint> = (0..l)
        .map(|i| {
            let frac = if l == 1 { 1.0 } else { i as f64 / (l - 1) as f64 };
            TrajectoryPoint {
                t_s: (i as f64 + 0.5) * section_s,
                state: state.toward(end, frac),
            }
        })
        .collect();
    let target_traj = AffectTrajectory::new(points)?;
    let dynamics: Vec<f64> = target_traj.points().iter().map(|p| arousal_dynamic(p.state.arousal)).collect();

    let low = 45 + (3.0 * (end.arousal + 1.0)).round() as u8;
    let register = (low, low + 24);

    let sources: Vec<String> = retrieved.iter().map(|r| r.entry.id.clone()).collect();
    let description = format!(
        "Start in {from} (v {sv:.2}, a {sa:.2}) and move toward {to} (v {ev:.2}, a {ea:.2}) over {l} sections. \
         {mode:?} mode at {tempo_bpm:.0} BPM, texture density {density:.2}. Current arousal trend: {trend}. \
         Guidance: {src}.",
        from = Quadrant::of(state).as_str(),
        sv = state.valence,
        sa = state.arousal,
        to = Quadrant::of(end).as_str(),
        ev = end.valence,
        ea = end.arousal,
        trend = trend_word(traj),
        src = if sources.is_empty() { "defaults".to_string() } else { sources.join(", ") },
    );

    let plan = InterventionPlan {
        description,
        attributes: MusicalAttributes { mode, instruments: pick_instruments(retrieved), register },
        tempo_bpm,
        density,
        dynamics,
        target_traj,
        duration_s: cfg.duration_s,
        sections: l,
        sources,
    };
    plan.validate()?;
    Ok(plan)
}

/// Piecewise-linear resampling onto `l` uniform timestamps spanning the
/// input. A zero-length span is spread at 1 s spacing.
pub fn resample(traj: &AffectTrajectory, l: usize) -> Result<AffectTrajectory, PlannerError> {
    if l == 0 {
        return Err(PlannerError::InvalidRequest("L must be at least 1".into()));
    }
    let pts = traj.points();
    let t0 = pts[0].t_s;
    let t1 = pts[pts.len() - 1].t_s;
    if pts.len() == 1 {
        let out = (0..l).map(|i| TrajectoryPoint { t_s: t0 + i as f64, state: pts[0].state }).collect();
        return Ok(AffectTrajectory::new(out)?);
    }
    let mut out = Vec::with_capacity(l);
    let mut seg = 0;
    for i in 0..l {
        let t = if l == 1 { t0 } else { t0 + (t1 - t0) * i as f64 / (l - 1) as f64 };
        while seg + 2 < pts.len() && pts[seg + 1].t_s < t {
            seg += 1;
        }
        let (a, b) = (pts[seg], pts[seg + 1]);
        let w = ((t - a.t_s) / (b.t_s - a.t_s)).clamp(0.0, 1.0);
        out.push(TrajectoryPoint {
            t_s: t,
            state: AffectState::new(
                (1.0 - w) * a.state.valence + w * b.state.valence,
                (1.0 - w) * a.state.arousal + w * b.state.arousal,
            ),
        });
    }
    Ok(AffectTrajectory::new(out)?)
}
