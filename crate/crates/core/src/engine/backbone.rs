use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use super::{compose, derive_controls, read_wav, render, AudioClip, EngineError, Score};
use crate::decoder::AffectState;
use crate::hook::{HookCommand, JsonLineProcess};
use crate::planner::InterventionPlan;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BackboneMode {
    #[default]
    Builtin,
    External { hook: HookCommand },
}

#[derive(Serialize)]
struct GenerateRequest<'a> {
    plan: &'a InterventionPlan,
    seed: u64,
    sample_rate_hz: u32,
}

#[derive(Deserialize)]
struct GenerateResponse {
    wav_path: PathBuf,
}

/// Audio generator. The external backbone returns a WAV path for the plan;
/// its audio replaces the builtin render only if it has the planned length.
/// The symbolic score always comes from `compose`.
pub struct Backbone {
    process: Option<JsonLineProcess>,
}

impl Backbone {
    pub fn new(mode: &BackboneMode) -> Self {
        let process = match mode {
            BackboneMode::Builtin => None,
            BackboneMode::External { hook } => match JsonLineProcess::spawn(hook) {
                Ok(p) => Some(p),
                Err(e) => {
                    log::warn!("external backbone unavailable, using builtin renderer: {e}");
                    None
                }
            },
        };
        Self { process }
    }

    pub fn generate(
        &mut self,
        plan: &InterventionPlan,
        state: AffectState,
        seed: u64,
        sample_rate_hz: u32,
    ) -> Result<(Score, AudioClip), EngineError> {
        let (global, sections) = derive_controls(plan, state, seed)?;
        let score = compose(&global, &sections, plan.duration_s, seed);
        if let Some(p) = self.process.as_mut() {
            match Self::external(p, plan, seed, sample_rate_hz) {
                Ok(clip) => return Ok((score, clip)),
                Err(e) => log::warn!("external backbone: {e}; using builtin renderer"),
            }
        }
        let clip = render(&score, sample_rate_hz);
        Ok((score, clip))
    }

    fn external(
        p: &mut JsonLineProcess,
        plan: &InterventionPlan,
        seed: u64,
        sample_rate_hz: u32,
    ) -> Result<AudioClip, String> {
        let resp: GenerateResponse =
            p.request(&GenerateRequest { plan, seed, sample_rate_hz }).map_err(|e| e.to_string())?;
        let (sr, samples) = read_wav(&resp.wav_path).map_err(|e| e.to_string())?;
        let expected = (plan.duration_s * sr as f64).round() as usize;
        if samples.len() != expected {
            return Err(format!("clip has {} samples, expected {expected}", samples.len()));
        }
        let starts = AudioClip::boundaries(&vec![plan.section_duration_s(); plan.sections], sr);
        Ok(AudioClip { sample_rate_hz: sr, samples, section_starts: starts })
    }
}
