//! The closed-loop session: each round decodes the listener, plans toward
//! the current planning target, generates a clip, lets the listener hear
//! it, and applies the residual update
//!
//! ```text
//! r_t       = e* - e'_t
//! e~_{t+1}  = clamp(e'_t + alpha * r_t)
//! ```
//!
//! The session target `e*` stays fixed unless an operator edits it; the
//! planning target `e~` walks toward it round by round.

mod report;
mod sink;
mod subject;

pub use report::{replay, SessionReport};
pub use sink::{DirSink, MemorySink, OperatorInput, SessionEvent, SessionIo};
pub use subject::{subject_step, SubjectModel, SubjectParams};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::decoder::{self, AffectDelta, AffectState, AffectTrajectory, Decoder, DecoderConfig, DecoderError};
use crate::engine::{wav_bytes, Backbone, BackboneMode, EngineError, DEFAULT_CLIP_SAMPLE_RATE_HZ};
use crate::metrics::{estimate_affect, evaluate_with_affect, EstimatorConfig, MetricReport, MetricsError, PlanConsConfig};
use crate::planner::{InterventionPlan, KnowledgeBase, PlanConfig, Planner, PlannerError, PlannerMode};
use crate::signal::{self, band_powers, window_stream, EegRecording, EegWindow, SignalError};

pub const DEFAULT_CONVERGENCE_EPS: f64 = 0.1;
pub const DEFAULT_FAILURE_BUDGET: usize = 2;

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("alpha {0} outside (0, 1]")]
    InvalidAlpha(f64),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("subject disconnected: {0}")]
    SubjectDisconnected(String),
    #[error(transparent)]
    Signal(#[from] SignalError),
    #[error(transparent)]
    Decoder(#[from] DecoderError),
    #[error(transparent)]
    Planner(#[from] PlannerError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// How the simulated listener's state is observed after each clip.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Observation {
    /// The decoder sees the subject's state exactly.
    #[default]
    Direct,
    /// A synthetic recording of the subject's state is decoded.
    Eeg { noise_uv: f64, duration_s: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SubjectMode {
    Simulated {
        params: SubjectParams,
        #[serde(default)]
        observation: Observation,
    },
    /// EEG arrives through [`SessionIo::next_segment`].
    Live { frames_per_round: usize, timeout_ms: u64 },
}

impl SubjectMode {
    pub fn is_live(&self) -> bool {
        matches!(self, SubjectMode::Live { .. })
    }
}

/// Where the affect of a generated clip comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ClipAffectSource {
    /// The endpoint of the plan's target trajectory.
    Ideal,
    /// [`estimate_affect`] on the rendered audio and score.
    #[default]
    Heuristic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LoopConfig {
    /// Intervention step size, in `(0, 1]`.
    pub alpha: f64,
    pub target: AffectState,
    pub max_rounds: usize,
    pub convergence_eps: f64,
    pub subject: SubjectMode,
    /// Failed rounds tolerated; one more aborts the session.
    pub failure_budget: usize,
    pub clip_affect: ClipAffectSource,
    pub sections: usize,
    pub duration_s: f64,
    pub sample_rate_hz: u32,
    pub window_s: f64,
    pub hop_s: f64,
    pub decoder: DecoderConfig,
    pub planner: PlannerMode,
    pub backbone: BackboneMode,
    pub estimator: EstimatorConfig,
    pub consistency: PlanConsConfig,
}

impl Default for LoopConfig {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            target: AffectState::new(0.6, -0.3),
            max_rounds: 4,
            convergence_eps: DEFAULT_CONVERGENCE_EPS,
            subject: SubjectMode::Simulated { params: SubjectParams::default(), observation: Observation::Direct },
            failure_budget: DEFAULT_FAILURE_BUDGET,
            clip_affect: ClipAffectSource::Heuristic,
            sections: 4,
            duration_s: 10.0,
            sample_rate_hz: DEFAULT_CLIP_SAMPLE_RATE_HZ,
            window_s: signal::DEFAULT_WINDOW_S,
            hop_s: signal::DEFAULT_HOP_S,
            decoder: DecoderConfig::default(),
            planner: PlannerMode::Template,
            backbone: BackboneMode::Builtin,
            estimator: EstimatorConfig::default(),
            consistency: PlanConsConfig::default(),
        }
    }
}

impl LoopConfig {
    pub fn validate(&self) -> Result<(), SessionError> {
        let bad = |m: String| Err(SessionError::InvalidConfig(m));
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return bad(format!("alpha {} outside (0, 1]", self.alpha));
        }
        if !(self.convergence_eps.is_finite() && self.convergence_eps > 0.0) {
            return bad(format!("convergence_eps {} must be positive", self.convergence_eps));
        }
        if self.sections == 0 {
            return bad("sections must be positive".into());
        }
        if !(self.duration_s.is_finite() && self.duration_s > 0.0) {
            return bad(format!("duration_s {} must be positive", self.duration_s));
        }
        if self.sample_rate_hz < 1000 {
            return bad(format!("sample_rate_hz {} below 1000", self.sample_rate_hz));
        }
        if !(self.window_s > 0.0 && self.hop_s > 0.0 && self.hop_s <= self.window_s) {
            return bad(format!("window {} s / hop {} s", self.window_s, self.hop_s));
        }
        match &self.subject {
            SubjectMode::Simulated { params, observation } => {
                params.validate().map_err(SessionError::InvalidConfig)?;
                if let Observation::Eeg { noise_uv, duration_s } = observation {
                    if !(*noise_uv >= 0.0 && *duration_s >= self.window_s) {
                        return bad("EEG observation needs noise >= 0 and at least one window".into());
                    }
                }
            }
            SubjectMode::Live { frames_per_round, timeout_ms } => {
                if *frames_per_round == 0 || *timeout_ms == 0 {
                    return bad("live mode needs frames_per_round and timeout_ms > 0".into());
                }
            }
        }
        Ok(())
    }

    fn plan_config(&self) -> PlanConfig {
        // the planning target already carries the alpha step
        PlanConfig { sections: self.sections, duration_s: self.duration_s, alpha_plan: 1.0, allow_fallback: true }
    }
}

/// `(target - post, clamp(post + alpha * (target - post)))`; the next
/// target is exactly `target` when `alpha = 1`.
pub fn update_target(
    post: AffectState,
    target: AffectState,
    alpha: f64,
) -> Result<(AffectDelta, AffectState), SessionError> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(SessionError::InvalidAlpha(alpha));
    }
    Ok((target.delta_from(post), post.toward(target, alpha)))
}

/// Likert ratings, each in `1..=5`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Feedback {
    pub naturalness: u8,
    pub emotion_match: u8,
    pub helpfulness: u8,
}

impl Feedback {
    pub fn validate(&self) -> Result<(), String> {
        for (name, v) in
            [("naturalness", self.naturalness), ("emotion_match", self.emotion_match), ("helpfulness", self.helpfulness)]
        {
            if !(1..=5).contains(&v) {
                return Err(format!("{name} rating {v} outside 1..5"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClipRef {
    /// Lowercase hex SHA-256 of the WAV bytes.
    pub hash: String,
    pub path: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    /// 1-based.
    pub round: usize,
    pub seed: u64,
    pub pre_state: AffectState,
    pub planning_target: AffectState,
    pub plan: InterventionPlan,
    pub clip_ref: ClipRef,
    pub clip_affect: AffectState,
    pub post_state: AffectState,
    /// Session target used for this round's update, after any operator edit.
    pub target: AffectState,
    pub residual: AffectDelta,
    pub next_target: AffectState,
    pub metrics: MetricReport,
    pub feedback: Option<Feedback>,
    pub operator_action: Option<AffectState>,
}

impl RoundRecord {
    /// Residual and next target re-derive from `post_state` and `target`.
    pub fn is_consistent(&self, alpha: f64) -> bool {
        match update_target(self.post_state, self.target, alpha) {
            Ok((r, next)) => r == self.residual && next == self.next_target,
            Err(_) => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundFailure {
    pub round: usize,
    pub error: String,
}

fn round_seed(seed: u64, round: usize) -> u64 {
    seed.wrapping_add((round as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Global state (mean of per-window decodes) and smoothed trajectory.
fn decode_windows(
    decoder: &mut Decoder,
    windows: &[EegWindow],
    timestamps: &[f64],
) -> Result<(AffectState, AffectTrajectory), SessionError> {
    if windows.is_empty() {
        return Err(DecoderError::EmptyInput.into());
    }
    let mut states = Vec::with_capacity(windows.len());
    for w in windows {
        w.validate()?;
        decoder.config().check_channels(&w.channels)?;
        states.push(decoder.decode_window(&band_powers(w, w.sample_rate_hz)?)?);
    }
    let n = states.len() as f64;
    let state = AffectState::new(
        states.iter().map(|s| s.valence).sum::<f64>() / n,
        states.iter().map(|s| s.arousal).sum::<f64>() / n,
    );
    let traj = decoder::smooth(&states, timestamps, decoder.config().ema_factor)?;
    Ok((state, traj))
}

fn decode_recording(
    decoder: &mut Decoder,
    rec: &EegRecording,
    cfg: &LoopConfig,
) -> Result<(AffectState, AffectTrajectory), SessionError> {
    let windows: Vec<EegWindow> = window_stream(rec, cfg.window_s, cfg.hop_s)?.collect();
    let ts: Vec<f64> = windows.iter().map(|w| w.start_s + w.duration_s / 2.0).collect();
    decode_windows(decoder, &windows, &ts)
}

/// Frames of a live segment are placed end to end.
fn decode_segment(decoder: &mut Decoder, frames: &[EegWindow]) -> Result<(AffectState, AffectTrajectory), SessionError> {
    let mut t = 0.0;
    let ts: Vec<f64> = frames
        .iter()
        .map(|f| {
            let mid = t + f.duration_s / 2.0;
            t += f.duration_s;
            mid
        })
        .collect();
    decode_windows(decoder, frames, &ts)
}

enum Listener {
    Simulated { subject: SubjectModel, observation: Observation },
    Live,
}

struct Loop<'a> {
    cfg: &'a LoopConfig,
    seed: u64,
    decoder: Decoder,
    planner: Planner,
    backbone: Backbone,
    listener: Listener,
    io: &'a mut dyn SessionIo,
}

impl Loop<'_> {
    fn observe(&mut self, round: usize) -> Result<(AffectState, AffectTrajectory), SessionError> {
        match &self.listener {
            Listener::Simulated { subject, observation: Observation::Direct } => {
                Ok((subject.state(), AffectTrajectory::constant(subject.state())))
            }
            Listener::Simulated { subject, observation: Observation::Eeg { noise_uv, duration_s } } => {
                let s = subject.state();
                let rec = signal::synth::affect_recording(
                    s.valence,
                    s.arousal,
                    *duration_s,
                    signal::DEFAULT_SAMPLE_RATE_HZ,
                    *noise_uv,
                    round_seed(self.seed ^ 0x5EED_0EE6, round),
                )?;
                decode_recording(&mut self.decoder, &rec, self.cfg)
            }
            Listener::Live => {
                let frames = self.io.next_segment(round)?;
                decode_segment(&mut self.decoder, &frames)
            }
        }
    }

    /// Plan, generate and score one clip; no listener state changes here.
    fn produce(
        &mut self,
        round: usize,
        pre: AffectState,
        traj: &AffectTrajectory,
        planning_target: AffectState,
        target: AffectState,
    ) -> Result<(InterventionPlan, ClipRef, AffectState, MetricReport), SessionError> {
        let plan = self.planner.plan(pre, traj, planning_target, &self.cfg.plan_config())?;
        self.io.emit(&SessionEvent::PlanIssued { round, plan: plan.clone() })?;
        let (score, clip) = self.backbone.generate(&plan, pre, round_seed(self.seed, round), self.cfg.sample_rate_hz)?;
        let wav = wav_bytes(&clip)?;
        let hash = hex::encode(Sha256::digest(&wav));
        let path = self.io.store_clip(&hash, &wav)?;
        let clip_ref = ClipRef { hash, path };
        self.io.emit(&SessionEvent::ClipReady { round, clip: clip_ref.clone() })?;
        let clip_affect = match self.cfg.clip_affect {
            ClipAffectSource::Ideal => plan.target_traj.last(),
            ClipAffectSource::Heuristic => estimate_affect(&clip, Some(&score), &self.cfg.estimator)?.0,
        };
        let metrics = evaluate_with_affect(&plan, &score, &clip, target, clip_affect, &self.cfg.consistency)?;
        Ok((plan, clip_ref, clip_affect, metrics))
    }
}

/// Runs a whole session. `recording`, when given in simulated mode,
/// supplies the initial state; live mode reads its first segment from `io`.
///
/// Component errors fail the round and leave the listener state untouched;
/// more than `failure_budget` failures abort the session. A live listener
/// that stops sending frames ends it with [`SessionError::SubjectDisconnected`].
pub fn run_session(
    cfg: &LoopConfig,
    kb: KnowledgeBase,
    recording: Option<&EegRecording>,
    seed: u64,
    io: &mut dyn SessionIo,
) -> Result<SessionReport, SessionError> {
    cfg.validate()?;
    let listener = match &cfg.subject {
        SubjectMode::Simulated { params, observation } => Listener::Simulated {
            subject: SubjectModel::new(params).map_err(SessionError::InvalidConfig)?,
            observation: *observation,
        },
        SubjectMode::Live { .. } => Listener::Live,
    };
    let mut lp = Loop {
        cfg,
        seed,
        decoder: Decoder::new(cfg.decoder.clone()),
        planner: Planner::new(kb, &cfg.planner),
        backbone: Backbone::new(&cfg.backbone),
        listener,
        io,
    };

    let (mut pre, mut traj) = match (recording, &mut lp.listener) {
        (Some(rec), Listener::Simulated { subject, .. }) => {
            let decoded = decode_recording(&mut lp.decoder, rec, cfg)?;
            subject.set_state(decoded.0);
            decoded
        }
        _ => lp.observe(0)?,
    };
    let initial = pre;
    lp.io.emit(&SessionEvent::Started { initial_state: initial, config: cfg.clone() })?;

    let mut target = cfg.target;
    let mut planning_target = update_target(pre, target, cfg.alpha)?.1;
    let mut rounds = Vec::new();
    let mut failures = Vec::new();

    for round in 1..=cfg.max_rounds {
        let seed_r = round_seed(seed, round);
        let produced = lp.produce(round, pre, &traj, planning_target, target);
        let (plan, clip_ref, clip_affect, metrics) = match produced {
            Ok(p) => p,
            Err(e) => {
                let failure = RoundFailure { round, error: e.to_string() };
                log::warn!("round {round} failed: {e}");
                lp.io.emit(&SessionEvent::RoundFailed(failure.clone()))?;
                failures.push(failure);
                if failures.len() > cfg.failure_budget {
                    break;
                }
                continue;
            }
        };

        if let Listener::Simulated { subject, .. } = &mut lp.listener {
            subject.step(clip_affect);
        }
        let (post, post_traj) = match lp.observe(round) {
            Ok(x) => x,
            Err(e @ SessionError::SubjectDisconnected(_)) => return Err(e),
            Err(e) => {
                let failure = RoundFailure { round, error: e.to_string() };
                lp.io.emit(&SessionEvent::RoundFailed(failure.clone()))?;
                failures.push(failure);
                if failures.len() > cfg.failure_budget {
                    break;
                }
                continue;
            }
        };
        lp.io.emit(&SessionEvent::Listened { round, post_state: post })?;

        let input = lp.io.operator_input(round);
        if let Some(edit) = input.target_edit {
            target = edit;
            lp.io.emit(&SessionEvent::OperatorAction { round, target: edit })?;
        }
        let (residual, next_target) = update_target(post, target, cfg.alpha)?;
        let record = RoundRecord {
            round,
            seed: seed_r,
            pre_state: pre,
            planning_target,
            plan,
            clip_ref,
            clip_affect,
            post_state: post,
            target,
            residual,
            next_target,
            metrics,
            feedback: input.feedback,
            operator_action: input.target_edit,
        };
        lp.io.emit(&SessionEvent::RoundCompleted(Box::new(record.clone())))?;
        rounds.push(record);

        pre = post;
        traj = post_traj;
        planning_target = next_target;
        if post.distance(target) < cfg.convergence_eps {
            break;
        }
    }

    let report = SessionReport::build(cfg, initial, rounds, failures);
    lp.io.emit(&SessionEvent::Finished(Box::new(report.clone())))?;
    Ok(report)
}
