//! Valence/arousal decoding from band powers.
//!
//! The spectral decoder uses frontal alpha asymmetry for valence and the
//! beta/alpha ratio for arousal. An external model can be plugged in through
//! [`Decoder`] with the `external` mode; it falls back to the spectral path
//! whenever the child process fails or times out.

mod affect;
mod eval;
mod external;

pub use affect::{AffectDelta, AffectState, AffectTrajectory, TrajectoryPoint};
pub use eval::{decode_trial, evaluate, evaluate_trials, DecoderReport, TrialError};
pub use external::Decoder;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hook::HookCommand;
use crate::signal::BandPower;

/// Guards the beta/alpha ratio on silent channels.
pub const EPSILON: f64 = 1e-8;
pub const DEFAULT_EMA_FACTOR: f64 = 0.6;

#[derive(Debug, Error, PartialEq)]
pub enum DecoderError {
    #[error("missing channel {0}")]
    MissingChannel(String),
    #[error("empty input")]
    EmptyInput,
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("degenerate variance: CCC undefined")]
    DegenerateVariance,
    #[error("invalid affect value: {0}")]
    InvalidValue(String),
    #[error("timestamps must be strictly increasing")]
    NonMonotonicTime,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum DecoderMode {
    #[default]
    Spectral,
    External { hook: HookCommand },
}

/// `x -> gain * x + offset`, applied before `tanh`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Affine {
    pub gain: f64,
    pub offset: f64,
}

impl Affine {
    pub const IDENTITY: Affine = Affine { gain: 1.0, offset: 0.0 };

    pub fn apply(&self, x: f64) -> f64 {
        self.gain * x + self.offset
    }
}

/// Per-subject personalization of both axes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub valence: Affine,
    pub arousal: Affine,
}

/// Maps the raw mean beta/alpha ratio `r` to `gain * ln(r) + bias`.
///
/// With the defaults a ratio of one decodes to neutral arousal and the
/// map is symmetric in `r` and `1/r`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArousalWeights {
    pub log_gain: f64,
    pub bias: f64,
}

impl Default for ArousalWeights {
    fn default() -> Self {
        Self { log_gain: 1.0, bias: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecoderConfig {
    #[serde(default)]
    pub mode: DecoderMode,
    /// (left, right) frontal pair.
    pub valence_channels: (String, String),
    #[serde(default)]
    pub arousal_weights: ArousalWeights,
    #[serde(default)]
    pub calibration: Option<Calibration>,
    #[serde(default = "default_ema")]
    pub ema_factor: f64,
}

fn default_ema() -> f64 {
    DEFAULT_EMA_FACTOR
}

impl Default for DecoderConfig {
    fn default() -> Self {
        Self {
            mode: DecoderMode::Spectral,
            valence_channels: ("F3".into(), "F4".into()),
            arousal_weights: ArousalWeights::default(),
            calibration: None,
            ema_factor: DEFAULT_EMA_FACTOR,
        }
    }
}

impl DecoderConfig {
    /// Spectral decoding needs both frontal channels.
    pub fn check_channels(&self, channels: &[String]) -> Result<(), DecoderError> {
        for label in [&self.valence_channels.0, &self.valence_channels.1] {
            if !channels.iter().any(|c| c == label) {
                return Err(DecoderError::MissingChannel(label.clone()));
            }
        }
        Ok(())
    }

    fn calibration(&self) -> Calibration {
        self.calibration.unwrap_or(Calibration { valence: Affine::IDENTITY, arousal: Affine::IDENTITY })
    }
}

/// Raw, pre-calibration features of one window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RawFeatures {
    /// `ln(alpha_right) - ln(alpha_left)`.
    pub alpha_asymmetry: f64,
    /// Mean over channels of `beta / (alpha + EPSILON)`.
    pub beta_alpha_ratio: f64,
}

pub fn raw_features(bp: &BandPower, cfg: &DecoderConfig) -> Result<RawFeatures, DecoderError> {
    let (left, right) = &cfg.valence_channels;
    let l = bp.channel(left).ok_or_else(|| DecoderError::MissingChannel(left.clone()))?;
    let r = bp.channel(right).ok_or_else(|| DecoderError::MissingChannel(right.clone()))?;
    if bp.values.is_empty() {
        return Err(DecoderError::EmptyInput);
    }
    let ratio = bp.values.iter().map(|v| v.beta / (v.alpha + EPSILON)).sum::<f64>()
        / bp.values.len() as f64;
    Ok(RawFeatures {
        alpha_asymmetry: (r.alpha + EPSILON).ln() - (l.alpha + EPSILON).ln(),
        beta_alpha_ratio: ratio,
    })
}

fn decode_window(bp: &BandPower, cfg: &DecoderConfig) -> Result<AffectState, DecoderError> {
    let raw = raw_features(bp, cfg)?;
    let cal = cfg.calibration();
    let w = cfg.arousal_weights;
    let arousal_pre = w.log_gain * raw.beta_alpha_ratio.max(EPSILON).ln() + w.bias;
    Ok(AffectState::new(
        cal.valence.apply(raw.alpha_asymmetry).tanh(),
        cal.arousal.apply(arousal_pre).tanh(),
    ))
}

/// Global state: per-window `tanh` decodes averaged over windows.
pub fn decode_global(windows: &[BandPower], cfg: &DecoderConfig) -> Result<AffectState, DecoderError> {
    if windows.is_empty() {
        return Err(DecoderError::EmptyInput);
    }
    let mut v = 0.0;
    let mut a = 0.0;
    for w in windows {
        let s = decode_window(w, cfg)?;
        v += s.valence;
        a += s.arousal;
    }
    let n = windows.len() as f64;
    Ok(AffectState::new(v / n, a / n))
}

/// Per-window decode smoothed with `y_k = f*x_k + (1-f)*y_{k-1}`, `y_0 = x_0`.
pub fn decode_trajectory(
    windows: &[BandPower],
    timestamps: &[f64],
    cfg: &DecoderConfig,
) -> Result<AffectTrajectory, DecoderError> {
    if windows.len() != timestamps.len() {
        return Err(DecoderError::LengthMismatch(windows.len(), timestamps.len()));
    }
    if windows.is_empty() {
        return Err(DecoderError::EmptyInput);
    }
    let states = windows
        .iter()
        .map(|w| decode_window(w, cfg))
        .collect::<Result<Vec<_>, _>>()?;
    smooth(&states, timestamps, cfg.ema_factor)
}

pub(crate) fn smooth(
    states: &[AffectState],
    timestamps: &[f64],
    factor: f64,
) -> Result<AffectTrajectory, DecoderError> {
    let mut points = Vec::with_capacity(states.len());
    let mut prev: Option<AffectState> = None;
    for (s, &t) in states.iter().zip(timestamps) {
        let y = match prev {
            None => *s,
            Some(p) => AffectState::new(
                factor * s.valence + (1.0 - factor) * p.valence,
                factor * s.arousal + (1.0 - factor) * p.arousal,
            ),
        };
        prev = Some(y);
        points.push(TrajectoryPoint { t_s: t, state: y });
    }
    AffectTrajectory::new(points)
}

/// Weak per-window labels consistent with a trial-level label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeakLabels {
    pub trajectory: AffectTrajectory,
    /// `trial_label - mean(output)`; nonzero only when clamping bit.
    pub residual: AffectDelta,
}

/// Shifts `traj` per axis so its mean equals `trial_label`, then clamps.
pub fn weak_labels(traj: &AffectTrajectory, trial_label: AffectState) -> WeakLabels {
    let mean = traj.mean();
    let dv = trial_label.valence - mean.valence;
    let da = trial_label.arousal - mean.arousal;
    let points: Vec<TrajectoryPoint> = traj
        .points()
        .iter()
        .map(|p| TrajectoryPoint {
            t_s: p.t_s,
            state: AffectState::new(p.state.valence + dv, p.state.arousal + da),
        })
        .collect();
    let trajectory = AffectTrajectory::new(points).expect("timestamps unchanged");
    let out_mean = trajectory.mean();
    WeakLabels {
        residual: AffectDelta {
            dv: trial_label.valence - out_mean.valence,
            da: trial_label.arousal - out_mean.arousal,
        },
        trajectory,
    }
}
