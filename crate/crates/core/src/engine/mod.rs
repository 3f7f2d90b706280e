//! Plan realization: global and per-section controls, a procedural score,
//! and an additive-synthesis renderer.

mod backbone;
mod compose;
mod controls;
mod render;
mod wav;

pub use backbone::{Backbone, BackboneMode};
pub use compose::compose;
pub use controls::{derive_controls, scale_for};
pub use render::{midi_to_hz, render, voice_level, SECTION_RMS_REF};
pub use wav::{read_wav, wav_bytes, write_wav};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::decoder::AffectState;
use crate::planner::{InterventionPlan, PlannerError, Voice};

pub const DEFAULT_CLIP_SAMPLE_RATE_HZ: u32 = 32_000;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Plan(#[from] PlannerError),
    #[error("invalid score: {0}")]
    InvalidScore(String),
    #[error("wav: {0}")]
    Wav(#[from] hound::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Style block shared by all sections.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalControl {
    /// Scale degrees as semitone offsets from the root, ascending from 0.
    pub scale: Vec<u8>,
    /// Root pitch class, 0 = C.
    pub root: u8,
    /// Inclusive MIDI range.
    pub register: (u8, u8),
    pub instruments: Vec<Voice>,
    pub base_gain: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SectionControl {
    /// 1-based.
    pub index: usize,
    pub tempo_bpm: f64,
    pub gain: f64,
    /// Expected notes per beat.
    pub note_density: f64,
    /// Expected fraction of non-triad tones.
    pub tension: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoteRole {
    /// One per beat; carries the tempo.
    Pulse,
    /// Counted by note density.
    Melody,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoteEvent {
    pub onset_beats: f64,
    pub duration_beats: f64,
    pub midi_pitch: u8,
    pub velocity: f64,
    pub voice: Voice,
    pub role: NoteRole,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreSection {
    pub control: SectionControl,
    pub duration_s: f64,
    pub events: Vec<NoteEvent>,
}

impl ScoreSection {
    pub fn beats(&self) -> f64 {
        self.duration_s * self.control.tempo_bpm / 60.0
    }
}

/// Events are sorted by onset within each section; onsets are relative to
/// the section start.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Score {
    pub global: GlobalControl,
    pub sections: Vec<ScoreSection>,
}

impl Score {
    pub fn duration_s(&self) -> f64 {
        self.sections.iter().map(|s| s.duration_s).sum()
    }

    pub fn n_events(&self) -> usize {
        self.sections.iter().map(|s| s.events.len()).sum()
    }

    pub fn melody_notes(&self) -> usize {
        self.sections.iter().flat_map(|s| &s.events).filter(|e| e.role == NoteRole::Melody).count()
    }

    pub fn total_beats(&self) -> f64 {
        self.sections.iter().map(ScoreSection::beats).sum()
    }

    pub fn to_canonical_json(&self) -> String {
        crate::canonical::to_string(self).expect("score serializes")
    }

    pub fn validate(&self) -> Result<(), EngineError> {
        let bad = |m: String| Err(EngineError::InvalidScore(m));
        if self.sections.is_empty() {
            return bad("no sections".into());
        }
        let (lo, hi) = self.global.register;
        if lo >= hi {
            return bad(format!("register {lo}..{hi} is empty"));
        }
        if self.global.scale.is_empty() {
            return bad("empty scale".into());
        }
        for s in &self.sections {
            if !(s.duration_s.is_finite() && s.duration_s > 0.0) {
                return bad(format!("section {} has duration {}", s.control.index, s.duration_s));
            }
            if !(40.0..=200.0).contains(&s.control.tempo_bpm) {
                return bad(format!("section {} tempo {}", s.control.index, s.control.tempo_bpm));
            }
            if s.events.windows(2).any(|w| w[0].onset_beats > w[1].onset_beats) {
                return bad(format!("section {} events out of order", s.control.index));
            }
            for e in &s.events {
                if e.midi_pitch < lo || e.midi_pitch > hi {
                    return bad(format!("pitch {} outside register", e.midi_pitch));
                }
                if !(0.0..=1.0).contains(&e.velocity) || !(e.duration_beats > 0.0) || e.onset_beats < 0.0 {
                    return bad(format!("bad event {e:?}"));
                }
            }
        }
        Ok(())
    }
}

/// Mono PCM in `[-1, 1]`; `section_starts[i]` is the first sample of
/// section `i`, starting at 0.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    pub sample_rate_hz: u32,
    pub samples: Vec<f64>,
    pub section_starts: Vec<usize>,
}

impl AudioClip {
    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate_hz as f64
    }

    pub fn n_sections(&self) -> usize {
        self.section_starts.len()
    }

    /// Half-open sample range of section `i`.
    pub fn section_span(&self, i: usize) -> std::ops::Range<usize> {
        let end = self.section_starts.get(i + 1).copied().unwrap_or(self.samples.len());
        self.section_starts[i]..end
    }

    /// Section starts for `durations` at `sample_rate_hz`, from cumulative
    /// time rounded to the nearest sample.
    pub fn boundaries(durations: &[f64], sample_rate_hz: u32) -> Vec<usize> {
        let mut t = 0.0;
        durations
            .iter()
            .map(|d| {
                let b = (t * sample_rate_hz as f64).round() as usize;
                t += d;
                b
            })
            .collect()
    }
}

/// `derive_controls`, `compose`, then `render`.
pub fn generate(
    plan: &InterventionPlan,
    state: AffectState,
    seed: u64,
    sample_rate_hz: u32,
) -> Result<(Score, AudioClip), EngineError> {
    let (global, sections) = derive_controls(plan, state, seed)?;
    let score = compose(&global, &sections, plan.duration_s, seed);
    let clip = render(&score, sample_rate_hz);
    Ok((score, clip))
}
