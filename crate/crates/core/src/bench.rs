//! Metric sweep over random plans, one table row per (method, plan, seed).
//!
//! `full` scores each plan against its own render. `shuffled` scores the
//! same render against a seeded permutation of the planned dynamics, the
//! baseline that temporal control has to beat.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::decoder::{AffectState, AffectTrajectory};
use crate::engine::{generate, EngineError, DEFAULT_CLIP_SAMPLE_RATE_HZ};
use crate::metrics::{evaluate_clip, EstimatorConfig, MetricsError, PlanConsConfig, TableRow};
use crate::planner::{InterventionPlan, KnowledgeBase, PlanConfig, Planner, PlannerError, PlannerMode};

/// Smallest arousal change a random plan travels, so its dynamics vary.
pub const MIN_AROUSAL_SPAN: f64 = 0.2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchConfig {
    pub plans: usize,
    pub seeds_per_plan: usize,
    pub seed: u64,
    pub sections: usize,
    pub duration_s: f64,
    pub sample_rate_hz: u32,
    pub estimator: EstimatorConfig,
    pub consistency: PlanConsConfig,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            plans: 20,
            seeds_per_plan: 1,
            seed: 0,
            sections: 4,
            duration_s: 10.0,
            sample_rate_hz: DEFAULT_CLIP_SAMPLE_RATE_HZ,
            estimator: EstimatorConfig::default(),
            consistency: PlanConsConfig::default(),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error(transparent)]
    Planner(#[from] PlannerError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

/// A plan from a uniformly drawn state and target whose arousal differs by
/// at least [`MIN_AROUSAL_SPAN`], planned with the full step to the target.
pub fn random_plan(planner: &mut Planner, seed: u64, sections: usize, duration_s: f64) -> Result<InterventionPlan, PlannerError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draw = |rng: &mut ChaCha8Rng| AffectState::new(rng.random_range(-1.0..=1.0), rng.random_range(-1.0..=1.0));
    let state = draw(&mut rng);
    let target = loop {
        let t = draw(&mut rng);
        if (t.arousal - state.arousal).abs() >= MIN_AROUSAL_SPAN {
            break t;
        }
    };
    let cfg = PlanConfig { sections, duration_s, alpha_plan: 1.0, allow_fallback: true };
    planner.plan(state, &AffectTrajectory::constant(state), target, &cfg)
}

/// Seeded permutation of `xs`.
pub fn shuffled(xs: &[f64], seed: u64) -> Vec<f64> {
    let mut out = xs.to_vec();
    out.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    out
}

fn row(method: &str, plan: usize, seed: u64, m: &crate::metrics::MetricReport) -> TableRow {
    TableRow {
        method: method.into(),
        plan,
        seed,
        fad: None,
        clap_sim: None,
        emo_mse: m.emo_mse,
        dyn_corr: m.dyn_corr,
        plan_cons: m.plan_cons,
    }
}

/// Rows for both methods, ordered by plan, seed, then method.
pub fn run_bench(kb: KnowledgeBase, cfg: &BenchConfig) -> Result<Vec<TableRow>, BenchError> {
    let mut planner = Planner::new(kb, &PlannerMode::Template);
    let mut rows = Vec::with_capacity(2 * cfg.plans * cfg.seeds_per_plan);
    for p in 0..cfg.plans {
        let plan_seed = cfg.seed.wrapping_add(p as u64);
        let plan = random_plan(&mut planner, plan_seed, cfg.sections, cfg.duration_s)?;
        let start = plan.target_traj.first();
        let end = plan.target_traj.last();
        for s in 0..cfg.seeds_per_plan {
            let seed = plan_seed.wrapping_mul(1000).wrapping_add(s as u64);
            let (score, clip) = generate(&plan, start, seed, cfg.sample_rate_hz)?;
            let full = evaluate_clip(&plan, &score, &clip, end, &cfg.estimator, &cfg.consistency)?;
            rows.push(row("full", p, seed, &full));
            let mut base = plan.clone();
            base.dynamics = shuffled(&plan.dynamics, seed);
            let sh = evaluate_clip(&base, &score, &clip, end, &cfg.estimator, &cfg.consistency)?;
            rows.push(row("shuffled", p, seed, &sh));
        }
    }
    Ok(rows)
}

/// Mean of the present values of `f` over rows of `method`.
pub fn column_mean(rows: &[TableRow], method: &str, f: impl Fn(&TableRow) -> Option<f64>) -> Option<f64> {
    let v: Vec<f64> = rows.iter().filter(|r| r.method == method).filter_map(f).collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn random_plans_travel_in_arousal() {
        let mut p = Planner::new(KnowledgeBase::starter(), &PlannerMode::Template);
        for seed in 0..50 {
            let plan = random_plan(&mut p, seed, 4, 10.0).unwrap();
            let (a0, a1) = (plan.target_traj.first().arousal, plan.target_traj.last().arousal);
            assert!((a1 - a0).abs() >= MIN_AROUSAL_SPAN - 1e-12);
        }
    }

    #[test]
    fn shuffle_is_a_seeded_permutation() {
        let xs = [0.1, 0.2, 0.3, 0.4, 0.5];
        let mut a = shuffled(&xs, 3);
        assert_eq!(a, shuffled(&xs, 3));
        a.sort_by(f64::total_cmp);
        assert_eq!(a, xs);
    }

    #[test]
    fn bench_rows_are_paired() {
        let cfg = BenchConfig { plans: 2, sample_rate_hz: 8000, ..Default::default() };
        let rows = run_bench(KnowledgeBase::starter(), &cfg).unwrap();
        assert_eq!(rows.len(), 4);
        assert_eq!(rows.iter().map(|r| r.method.as_str()).collect::<Vec<_>>(), ["full", "shuffled", "full", "shuffled"]);
        assert_eq!(rows[0].emo_mse, rows[1].emo_mse);
    }
}
