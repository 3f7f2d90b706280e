use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::{estimate_tempo, loudness_curve, MetricsError};
use crate::decoder::AffectState;
use crate::engine::{midi_to_hz, AudioClip, Score};

/// Krumhansl–Kessler key profiles, tonic first.
const MAJOR_PROFILE: [f64; 12] = [6.35, 2.23, 3.48, 2.33, 4.38, 4.09, 2.52, 5.19, 2.39, 3.66, 2.29, 2.88];
const MINOR_PROFILE: [f64; 12] = [6.33, 2.68, 3.52, 5.38, 2.60, 3.53, 2.54, 4.75, 3.98, 2.69, 3.34, 3.17];

/// Roughness weight per interval class 1..=6 (m2, M2, m3, M3, P4, tritone).
const INTERVAL_DISSONANCE: [f64; 6] = [1.0, 0.6, 0.1, 0.05, 0.0, 0.8];

/// Weights of the heuristic audio-affect estimator. `version` changes
/// whenever a weight does, so stored Emo-MSE values stay comparable.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    pub version: u32,
    pub tempo_weight: f64,
    pub loudness_weight: f64,
    /// RMS mapped to loudness term +1.
    pub rms_ref: f64,
    pub mode_weight: f64,
    pub consonance_weight: f64,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            version: 1,
            tempo_weight: 0.6,
            loudness_weight: 0.4,
            rms_ref: crate::engine::SECTION_RMS_REF,
            mode_weight: 0.4,
            consonance_weight: 0.3,
        }
    }
}

/// Duration-weighted pitch-class histogram of a score, indexed by absolute
/// pitch class (0 = C).
pub fn pitch_class_histogram(score: &Score) -> [f64; 12] {
    let mut h = [0.0; 12];
    for s in &score.sections {
        let beat_s = 60.0 / s.control.tempo_bpm;
        for e in &s.events {
            h[(e.midi_pitch % 12) as usize] += e.duration_beats * beat_s * e.velocity;
        }
    }
    h
}

/// Spectral chroma: power of 55 Hz to 2 kHz bins folded onto pitch classes.
fn chroma(clip: &AudioClip) -> [f64; 12] {
    let sr = clip.sample_rate_hz as f64;
    let n = 4096.min(clip.samples.len().next_power_of_two());
    let fft = FftPlanner::new().plan_fft_forward(n);
    let hann: Vec<f64> = (0..n).map(|i| 0.5 - 0.5 * (std::f64::consts::TAU * i as f64 / n as f64).cos()).collect();
    let mut h = [0.0; 12];
    let mut buf = vec![Complex::new(0.0, 0.0); n];
    for frame in clip.samples.chunks(n) {
        for (i, b) in buf.iter_mut().enumerate() {
            *b = Complex::new(frame.get(i).copied().unwrap_or(0.0) * hann[i], 0.0);
        }
        fft.process(&mut buf);
        for (k, b) in buf.iter().enumerate().take(n / 2).skip(1) {
            let f = k as f64 * sr / n as f64;
            if !(55.0..=2000.0).contains(&f) {
                continue;
            }
            let midi = 69.0 + 12.0 * (f / midi_to_hz(69)).log2();
            h[(midi.round() as i64).rem_euclid(12) as usize] += b.norm_sqr();
        }
    }
    h
}

fn correlate(h: &[f64; 12], profile: &[f64; 12], tonic: usize) -> f64 {
    let p: Vec<f64> = (0..12).map(|i| profile[(i + 12 - tonic) % 12]).collect();
    crate::metrics::stats::pearson(h, &p).unwrap_or(0.0)
}

/// `+1` for a major best key, `-1` for minor, `0` for a flat histogram.
fn mode_sign(h: &[f64; 12]) -> f64 {
    let best = |profile| (0..12).map(|t| correlate(h, profile, t)).fold(f64::MIN, f64::max);
    let (maj, min) = (best(&MAJOR_PROFILE), best(&MINOR_PROFILE));
    if maj == min {
        0.0
    } else if maj > min {
        1.0
    } else {
        -1.0
    }
}

/// Mean pairwise interval-class roughness of the histogram, in `[0, 1]`.
fn dissonance(h: &[f64; 12]) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..12 {
        for j in i + 1..12 {
            let w = h[i] * h[j];
            let ic = (j - i).min(12 - (j - i));
            num += w * INTERVAL_DISSONANCE[ic - 1];
            den += w;
        }
    }
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

/// Heuristic valence/arousal of a clip.
///
/// Arousal mixes tempo, `(bpm - 60) / 60`, with loudness,
/// `2 * mean_rms / rms_ref - 1`. Without a detectable tempo the loudness
/// term alone is used. Valence is a mode term (best Krumhansl key major or
/// minor) plus a consonance term `weight * (1 - 2 * dissonance)`. Pitch
/// content comes from the score when given, otherwise from spectral chroma.
pub fn estimate_affect(
    clip: &AudioClip,
    score: Option<&Score>,
    cfg: &EstimatorConfig,
) -> Result<(AffectState, Option<f64>), MetricsError> {
    if clip.samples.is_empty() {
        return Err(MetricsError::EmptyClip);
    }
    let mean_rms = match loudness_curve(clip) {
        Ok(c) => c.mean(),
        Err(_) => super::loudness::rms(&clip.samples),
    };
    let loud = 2.0 * mean_rms / cfg.rms_ref - 1.0;
    let tempo = match estimate_tempo(clip) {
        Ok(t) => Some(t),
        Err(MetricsError::NoPeriodicity | MetricsError::TooShort(_)) => None,
        Err(e) => return Err(e),
    };
    let arousal = match tempo {
        Some(t) => cfg.tempo_weight * (t - 60.0) / 60.0 + cfg.loudness_weight * loud,
        None => loud,
    };
    let h = score.map(pitch_class_histogram).unwrap_or_else(|| chroma(clip));
    let valence = if h.iter().all(|&x| x == 0.0) {
        0.0
    } else {
        cfg.mode_weight * mode_sign(&h) + cfg.consonance_weight * (1.0 - 2.0 * dissonance(&h))
    };
    Ok((AffectState::new(valence, arousal), tempo))
}
