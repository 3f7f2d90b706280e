use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::decoder::AffectState;

/// Parameters of a simulated listener.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubjectParams {
    /// Pull toward the music's affect per round, in `[0, 1]`.
    pub beta: f64,
    pub noise_std: f64,
    pub initial: AffectState,
    pub seed: u64,
}

impl Default for SubjectParams {
    fn default() -> Self {
        Self { beta: 1.0, noise_std: 0.0, initial: AffectState::new(-0.5, 0.6), seed: 0 }
    }
}

impl SubjectParams {
    pub fn validate(&self) -> Result<(), String> {
        if !(0.0..=1.0).contains(&self.beta) {
            return Err(format!("beta {} outside [0, 1]", self.beta));
        }
        if !(self.noise_std.is_finite() && self.noise_std >= 0.0) {
            return Err(format!("noise_std {} must be finite and non-negative", self.noise_std));
        }
        Ok(())
    }
}

/// Listener whose affect relaxes toward what it hears. `state` is always
/// inside the unit square.
#[derive(Debug, Clone)]
pub struct SubjectModel {
    beta: f64,
    noise: Option<Normal<f64>>,
    state: AffectState,
    rng: ChaCha8Rng,
}

impl SubjectModel {
    pub fn new(p: &SubjectParams) -> Result<Self, String> {
        p.validate()?;
        let noise = (p.noise_std > 0.0).then(|| Normal::new(0.0, p.noise_std).expect("validated std"));
        Ok(Self { beta: p.beta, noise, state: p.initial, rng: ChaCha8Rng::seed_from_u64(p.seed) })
    }

    pub fn state(&self) -> AffectState {
        self.state
    }

    pub fn set_state(&mut self, s: AffectState) {
        self.state = s;
    }

    /// `clamp(state + beta * (clip - state) + noise)`.
    pub fn step(&mut self, clip_affect: AffectState) -> AffectState {
        let pulled = if self.beta == 0.0 { self.state } else { self.state.toward(clip_affect, self.beta) };
        if let Some(n) = self.noise {
            let (nv, na) = (n.sample(&mut self.rng), n.sample(&mut self.rng));
            self.state = AffectState::new(pulled.valence + nv, pulled.arousal + na);
        } else {
            self.state = pulled;
        }
        self.state
    }
}

/// One step of `subj`; see [`SubjectModel::step`].
pub fn subject_step(subj: &mut SubjectModel, clip_affect: AffectState) -> AffectState {
    subj.step(clip_affect)
}
