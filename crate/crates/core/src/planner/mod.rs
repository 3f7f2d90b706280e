//! Structured intervention planning.
//!
//! A plan is retrieved-then-synthesized: BM25 over the knowledge base picks
//! guidance entries for the current and target quadrants, and a fixed set
//! of rules turns state, target and guidance into tempo, mode, density,
//! per-section dynamics and a target trajectory.

mod bm25;
mod external;
mod kb;
mod synth;

pub use bm25::{tokenize, Bm25, BM25_B, BM25_K1};
pub use external::{Planner, PlannerMode};
pub use kb::{KbAttributes, KnowledgeBase, KnowledgeEntry, Mode, Quadrant, Voice};
pub use synth::{build_query, resample, retrieve, synthesize_plan, PlanConfig, Retrieved, QUADRANT_BOOST};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::decoder::{AffectTrajectory, DecoderError};

#[derive(Debug, Error)]
pub enum PlannerError {
    #[error("knowledge base is empty")]
    EmptyKnowledgeBase,
    #[error("no applicable knowledge and fallback disabled")]
    NoApplicableKnowledge,
    #[error("invalid knowledge entry {id}: {reason}")]
    InvalidEntry { id: String, reason: String },
    #[error("knowledge base line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("invalid plan: {0}")]
    InvalidPlan(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error(transparent)]
    Affect(#[from] DecoderError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Musical attributes of a plan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MusicalAttributes {
    pub mode: Mode,
    pub instruments: Vec<Voice>,
    /// Inclusive MIDI pitch range `(low, high)`.
    pub register: (u8, u8),
}

/// A structured intervention plan.
///
/// `dynamics` and `target_traj` both have one entry per section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterventionPlan {
    pub description: String,
    pub attributes: MusicalAttributes,
    pub tempo_bpm: f64,
    /// Texture density in `[0, 1]`.
    pub density: f64,
    pub dynamics: Vec<f64>,
    pub target_traj: AffectTrajectory,
    pub duration_s: f64,
    pub sections: usize,
    #[serde(default)]
    pub sources: Vec<String>,
}

impl InterventionPlan {
    pub fn validate(&self) -> Result<(), PlannerError> {
        let bad = |m: String| Err(PlannerError::InvalidPlan(m));
        if self.sections == 0 {
            return bad("at least one section required".into());
        }
        if !(40.0..=200.0).contains(&self.tempo_bpm) {
            return bad(format!("tempo {} outside [40, 200]", self.tempo_bpm));
        }
        if !(0.0..=1.0).contains(&self.density) {
            return bad(format!("density {} outside [0, 1]", self.density));
        }
        if !(self.duration_s.is_finite() && self.duration_s > 0.0) {
            return bad(format!("duration {} must be positive", self.duration_s));
        }
        if self.dynamics.len() != self.sections || self.target_traj.len() != self.sections {
            return bad(format!(
                "{} sections but {} dynamics and {} trajectory points",
                self.sections,
                self.dynamics.len(),
                self.target_traj.len()
            ));
        }
        if let Some(d) = self.dynamics.iter().find(|d| !(0.0..=1.0).contains(*d)) {
            return bad(format!("dynamic level {d} outside [0, 1]"));
        }
        let (lo, hi) = self.attributes.register;
        if lo >= hi || hi > 127 {
            return bad(format!("register {lo}..{hi} is empty"));
        }
        if self.attributes.instruments.len() > 3 {
            return bad("at most three instruments".into());
        }
        Ok(())
    }

    /// Canonical JSON (sorted keys).
    pub fn to_canonical_json(&self) -> String {
        crate::canonical::to_string(self).expect("plan serializes")
    }

    pub fn section_duration_s(&self) -> f64 {
        self.duration_s / self.sections as f64
    }
}
