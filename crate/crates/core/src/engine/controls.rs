use super::{EngineError, GlobalControl, SectionControl};
use crate::decoder::AffectState;
use crate::planner::{InterventionPlan, Mode, Voice};

const IONIAN: [u8; 7] = [0, 2, 4, 5, 7, 9, 11];
const AEOLIAN: [u8; 7] = [0, 2, 3, 5, 7, 8, 10];
const DORIAN: [u8; 7] = [0, 2, 3, 5, 7, 9, 10];

/// Maximum relative tempo drift across sections.
const TEMPO_DRIFT: f64 = 0.05;

pub fn scale_for(mode: Mode) -> &'static [u8] {
    match mode {
        Mode::Major => &IONIAN,
        Mode::Minor => &AEOLIAN,
        Mode::Dorian => &DORIAN,
    }
}

/// Global style block plus one control row per section.
///
/// The root is the register floor's pitch class. Every instrument set gets
/// a percussive voice (pluck or soft noise) so beats carry onsets. The seed
/// is accepted for interface symmetry with `compose`; controls do not
/// depend on it.
pub fn derive_controls(
    plan: &InterventionPlan,
    state: AffectState,
    _seed: u64,
) -> Result<(GlobalControl, Vec<SectionControl>), EngineError> {
    plan.validate()?;
    let mut instruments = plan.attributes.instruments.clone();
    if instruments.is_empty() {
        instruments = vec![Voice::SinePad, Voice::Pluck, Voice::SoftNoisePerc];
    }
    if !instruments.iter().any(|v| matches!(v, Voice::Pluck | Voice::SoftNoisePerc)) {
        instruments.push(Voice::Pluck);
    }
    let global = GlobalControl {
        scale: scale_for(plan.attributes.mode).to_vec(),
        root: plan.attributes.register.0 % 12,
        register: plan.attributes.register,
        instruments,
        base_gain: 0.7 + 0.3 * (state.arousal + 1.0) / 2.0,
    };
    let a0 = plan.target_traj.first().arousal;
    let sections = plan
        .target_traj
        .points()
        .iter()
        .zip(&plan.dynamics)
        .enumerate()
        .map(|(i, (p, &gain))| SectionControl {
            index: i + 1,
            tempo_bpm: (plan.tempo_bpm * (1.0 + TEMPO_DRIFT * (p.state.arousal - a0) / 2.0)).clamp(40.0, 200.0),
            gain,
            note_density: plan.density * (1.0 + 0.5 * p.state.arousal),
            tension: (1.0 - p.state.valence) / 2.0,
        })
        .collect();
    Ok((global, sections))
}
