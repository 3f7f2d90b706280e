use serde::{Deserialize, Serialize};

use super::DecoderError;

/// A point on the valence/arousal plane, both axes in `[-1, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawAffect")]
pub struct AffectState {
    pub valence: f64,
    pub arousal: f64,
}

#[derive(Deserialize)]
struct RawAffect {
    valence: f64,
    arousal: f64,
}

impl TryFrom<RawAffect> for AffectState {
    type Error = DecoderError;

    fn try_from(r: RawAffect) -> Result<Self, Self::Error> {
        AffectState::checked(r.valence, r.arousal)
    }
}

impl AffectState {
    pub const NEUTRAL: AffectState = AffectState { valence: 0.0, arousal: 0.0 };

    /// Clamps both axes into `[-1, 1]`. Inputs must be finite.
    pub fn new(valence: f64, arousal: f64) -> Self {
        debug_assert!(valence.is_finite() && arousal.is_finite());
        Self { valence: valence.clamp(-1.0, 1.0), arousal: arousal.clamp(-1.0, 1.0) }
    }

    /// Like [`new`](Self::new) but rejects NaN/Inf.
    pub fn checked(valence: f64, arousal: f64) -> Result<Self, DecoderError> {
        if !(valence.is_finite() && arousal.is_finite()) {
            return Err(DecoderError::InvalidValue(format!("({valence}, {arousal})")));
        }
        Ok(Self::new(valence, arousal))
    }

    /// Converts from the 1-9 rating scale, `x = (s - 5) / 4`.
    pub fn from_scale(valence: f64, arousal: f64) -> Self {
        Self::new((valence - 5.0) / 4.0, (arousal - 5.0) / 4.0)
    }

    /// Converts to the 1-9 rating scale, `s = 5 + 4x`.
    pub fn to_scale(self) -> (f64, f64) {
        (5.0 + 4.0 * self.valence, 5.0 + 4.0 * self.arousal)
    }

    pub fn distance(self, other: AffectState) -> f64 {
        (self.valence - other.valence).hypot(self.arousal - other.arousal)
    }

    /// `self - other`, unclamped.
    pub fn delta_from(self, other: AffectState) -> AffectDelta {
        AffectDelta { dv: self.valence - other.valence, da: self.arousal - other.arousal }
    }

    /// `self + scale * delta`, clamped.
    pub fn step(self, delta: AffectDelta, scale: f64) -> AffectState {
        AffectState::new(self.valence + scale * delta.dv, self.arousal + scale * delta.da)
    }

    /// `self + t * (other - self)`, clamped; exactly `other` at `t = 1`.
    pub fn toward(self, other: AffectState, t: f64) -> AffectState {
        if t == 1.0 {
            return other;
        }
        self.step(other.delta_from(self), t)
    }

    /// Quadrant tag, with zero counted as high.
    pub fn quadrant(self) -> &'static str {
        match (self.valence >= 0.0, self.arousal >= 0.0) {
            (true, true) => "HVHA",
            (true, false) => "HVLA",
            (false, true) => "LVHA",
            (false, false) => "LVLA",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffectDelta {
    pub dv: f64,
    pub da: f64,
}

impl AffectDelta {
    pub fn norm(self) -> f64 {
        self.dv.hypot(self.da)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub t_s: f64,
    pub state: AffectState,
}

/// A nonempty, strictly time-ordered VA sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawTrajectory")]
pub struct AffectTrajectory {
    points: Vec<TrajectoryPoint>,
}

#[derive(Deserialize)]
struct RawTrajectory {
    points: Vec<TrajectoryPoint>,
}

impl TryFrom<RawTrajectory> for AffectTrajectory {
    type Error = DecoderError;

    fn try_from(r: RawTrajectory) -> Result<Self, Self::Error> {
        AffectTrajectory::new(r.points)
    }
}

impl AffectTrajectory {
    pub fn new(points: Vec<TrajectoryPoint>) -> Result<Self, DecoderError> {
        if points.is_empty() {
            return Err(DecoderError::EmptyInput);
        }
        if points.iter().any(|p| !p.t_s.is_finite()) {
            return Err(DecoderError::InvalidValue("non-finite timestamp".into()));
        }
        if points.windows(2).any(|w| w[1].t_s <= w[0].t_s) {
            return Err(DecoderError::NonMonotonicTime);
        }
        Ok(Self { points })
    }

    /// Single-point trajectory at t = 0.
    pub fn constant(state: AffectState) -> Self {
        Self { points: vec![TrajectoryPoint { t_s: 0.0, state }] }
    }

    pub fn points(&self) -> &[TrajectoryPoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn first(&self) -> AffectState {
        self.points[0].state
    }

    pub fn last(&self) -> AffectState {
        self.points[self.points.len() - 1].state
    }

    pub fn mean(&self) -> AffectState {
        let n = self.points.len() as f64;
        let (v, a) = self
            .points
            .iter()
            .fold((0.0, 0.0), |(v, a), p| (v + p.state.valence, a + p.state.arousal));
        AffectState::new(v / n, a / n)
    }

    pub fn valences(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.state.valence).collect()
    }

    pub fn arousals(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.state.arousal).collect()
    }
}
