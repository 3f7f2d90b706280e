use std::fmt::Write;

use serde::{Deserialize, Serialize};

use super::{LoopConfig, RoundFailure, RoundRecord, SessionEvent};
use crate::decoder::AffectState;

/// End-of-session summary. Every derived field is a function of the
/// config, the initial state and the round records; see [`SessionReport::build`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionReport {
    pub alpha: f64,
    pub initial_state: AffectState,
    /// Session target in force at the end, after operator edits.
    pub target: AffectState,
    pub rounds: Vec<RoundRecord>,
    pub failures: Vec<RoundFailure>,
    pub aborted: bool,
    /// `v_final - v_initial`; 0 without rounds.
    pub delta_valence: f64,
    /// `|a_final - a_target|`, from the initial state without rounds.
    pub aro_dev: f64,
    pub convergence_round: Option<usize>,
    pub narrative: String,
}

fn fmt_state(s: AffectState) -> String {
    format!("({:+.3}, {:+.3})", s.valence, s.arousal)
}

impl SessionReport {
    pub fn build(
        cfg: &LoopConfig,
        initial_state: AffectState,
        rounds: Vec<RoundRecord>,
        failures: Vec<RoundFailure>,
    ) -> Self {
        let target = rounds.last().map_or(cfg.target, |r| r.target);
        let (delta_valence, aro_dev) = Self::summary(initial_state, target, &rounds);
        let convergence_round =
            rounds.iter().find(|r| r.post_state.distance(r.target) < cfg.convergence_eps).map(|r| r.round);
        let aborted = failures.len() > cfg.failure_budget;
        let mut report = SessionReport {
            alpha: cfg.alpha,
            initial_state,
            target,
            rounds,
            failures,
            aborted,
            delta_valence,
            aro_dev,
            convergence_round,
            narrative: String::new(),
        };
        report.narrative = report.narrate();
        report
    }

    /// `(delta_valence, aro_dev)` recomputed from the records.
    pub fn summary(initial: AffectState, target: AffectState, rounds: &[RoundRecord]) -> (f64, f64) {
        match (rounds.first(), rounds.last()) {
            (Some(first), Some(last)) => (
                last.post_state.valence - first.pre_state.valence,
                (last.post_state.arousal - target.arousal).abs(),
            ),
            _ => (0.0, (initial.arousal - target.arousal).abs()),
        }
    }

    /// True when the stored summary matches the records.
    pub fn is_consistent(&self) -> bool {
        Self::summary(self.initial_state, self.target, &self.rounds) == (self.delta_valence, self.aro_dev)
            && self.rounds.iter().all(|r| r.is_consistent(self.alpha))
    }

    pub fn to_canonical_json(&self) -> String {
        crate::canonical::to_string(self).expect("report serializes")
    }

    fn narrate(&self) -> String {
        let mut s = String::new();
        let n = self.rounds.len();
        let _ = write!(
            s,
            "Session started at {} with target {}. ",
            fmt_state(self.initial_state),
            fmt_state(self.target)
        );
        if n == 0 {
            s.push_str("No round completed.");
        } else {
            let last = &self.rounds[n - 1];
            let _ = write!(
                s,
                "After {n} round{} the listener is at {}: valence changed by {:+.3} and arousal is {:.3} from target. ",
                if n == 1 { "" } else { "s" },
                fmt_state(last.post_state),
                self.delta_valence,
                self.aro_dev
            );
            match self.convergence_round {
                Some(k) => {
                    let _ = write!(s, "Converged in round {k}.");
                }
                None => s.push_str("Did not converge."),
            }
            let mse: f64 = self.rounds.iter().map(|r| r.metrics.emo_mse).sum::<f64>() / n as f64;
            let _ = write!(s, " Mean Emo-MSE {mse:.4}.");
            let rated: Vec<_> = self.rounds.iter().filter_map(|r| r.feedback).collect();
            if !rated.is_empty() {
                let k = rated.len() as f64;
                let mean = |f: fn(&super::Feedback) -> u8| rated.iter().map(|r| f(r) as f64).sum::<f64>() / k;
                let _ = write!(
                    s,
                    " Ratings over {} round{}: naturalness {:.2}, emotion match {:.2}, helpfulness {:.2}.",
                    rated.len(),
                    if rated.len() == 1 { "" } else { "s" },
                    mean(|f| f.naturalness),
                    mean(|f| f.emotion_match),
                    mean(|f| f.helpfulness)
                );
            }
            let edits = self.rounds.iter().filter(|r| r.operator_action.is_some()).count();
            if edits > 0 {
                let _ = write!(s, " The operator edited the target {edits} time{}.", if edits == 1 { "" } else { "s" });
            }
        }
        if !self.failures.is_empty() {
            let _ = write!(s, " {} round{} failed", self.failures.len(), if self.failures.len() == 1 { "" } else { "s" });
            s.push_str(if self.aborted { " and the session was aborted." } else { "." });
        }
        s
    }

    /// Markdown rendering: narrative plus the per-round table.
    pub fn to_markdown(&self) -> String {
        let mut s = String::from("# Intervention report\n\n");
        s.push_str(&self.narrative);
        s.push_str("\n\n| round | pre | planning target | clip affect | post | tempo | Emo-MSE | Dyn-Corr | Plan-Cons |\n");
        s.push_str("|---|---|---|---|---|---|---|---|---|\n");
        for r in &self.rounds {
            let _ = writeln!(
                s,
                "| {} | {} | {} | {} | {} | {:.1} | {:.4} | {} | {:.3} |",
                r.round,
                fmt_state(r.pre_state),
                fmt_state(r.planning_target),
                fmt_state(r.clip_affect),
                fmt_state(r.post_state),
                r.plan.tempo_bpm,
                r.metrics.emo_mse,
                r.metrics.dyn_corr.map_or("n/a".to_string(), |c| format!("{c:.3}")),
                r.metrics.plan_cons
            );
        }
        for f in &self.failures {
            let _ = writeln!(s, "\nRound {} failed: {}", f.round, f.error);
        }
        s
    }
}

/// Rebuilds the report from a session's event stream. Needs the `Started`
/// event; round and failure events are taken in order.
pub fn replay<'a>(events: impl IntoIterator<Item = &'a SessionEvent>) -> Option<SessionReport> {
    let mut start = None;
    let mut rounds = Vec::new();
    let mut failures = Vec::new();
    for e in events {
        match e {
            SessionEvent::Started { initial_state, config } => start = Some((*initial_state, config.clone())),
            SessionEvent::RoundCompleted(r) => rounds.push((**r).clone()),
            SessionEvent::RoundFailed(f) => failures.push(f.clone()),
            _ => {}
        }
    }
    let (initial, cfg) = start?;
    Some(SessionReport::build(&cfg, initial, rounds, failures))
}
