use serde::{Deserialize, Serialize};

use super::{decode_global, smooth, AffectState, AffectTrajectory, DecoderConfig, DecoderError, DecoderMode};
use crate::hook::JsonLineProcess;
use crate::signal::BandPower;

#[derive(Serialize)]
struct WindowRequest<'a> {
    window_id: u64,
    band_powers: &'a BandPower,
}

#[derive(Deserialize)]
struct WindowResponse {
    valence: f64,
    arousal: f64,
}

/// Stateful decoder front end. In `external` mode each window goes to the
/// child process; any failure decodes that window spectrally instead.
pub struct Decoder {
    cfg: DecoderConfig,
    process: Option<JsonLineProcess>,
    next_id: u64,
}

impl Decoder {
    pub fn new(cfg: DecoderConfig) -> Self {
        let process = match &cfg.mode {
            DecoderMode::Spectral => None,
            DecoderMode::External { hook } => match JsonLineProcess::spawn(hook) {
                Ok(p) => Some(p),
                Err(e) => {
                    log::warn!("external decoder unavailable, using spectral mode: {e}");
                    None
                }
            },
        };
        Self { cfg, process, next_id: 0 }
    }

    pub fn config(&self) -> &DecoderConfig {
        &self.cfg
    }

    pub fn decode_window(&mut self, bp: &BandPower) -> Result<AffectState, DecoderError> {
        let id = self.next_id;
        self.next_id += 1;
        if let Some(p) = self.process.as_mut() {
            match p.request::<_, WindowResponse>(&WindowRequest { window_id: id, band_powers: bp }) {
                Ok(r) => match AffectState::checked(r.valence, r.arousal) {
                    Ok(s) => return Ok(s),
                    Err(e) => log::warn!("external decoder returned {e}; falling back to spectral"),
                },
                Err(e) => log::warn!("external decoder window {id}: {e}; falling back to spectral"),
            }
        }
        decode_global(std::slice::from_ref(bp), &self.cfg)
    }

    pub fn decode_global(&mut self, windows: &[BandPower]) -> Result<AffectState, DecoderError> {
        if windows.is_empty() {
            return Err(DecoderError::EmptyInput);
        }
        let states = windows.iter().map(|w| self.decode_window(w)).collect::<Result<Vec<_>, _>>()?;
        let n = states.len() as f64;
        Ok(AffectState::new(
            states.iter().map(|s| s.valence).sum::<f64>() / n,
            states.iter().map(|s| s.arousal).sum::<f64>() / n,
        ))
    }

    pub fn decode_trajectory(
        &mut self,
        windows: &[BandPower],
        timestamps: &[f64],
    ) -> Result<AffectTrajectory, DecoderError> {
        if windows.len() != timestamps.len() {
            return Err(DecoderError::LengthMismatch(windows.len(), timestamps.len()));
        }
        if windows.is_empty() {
            return Err(DecoderError::EmptyInput);
        }
        let states = windows.iter().map(|w| self.decode_window(w)).collect::<Result<Vec<_>, _>>()?;
        smooth(&states, timestamps, self.cfg.ema_factor)
    }
}
