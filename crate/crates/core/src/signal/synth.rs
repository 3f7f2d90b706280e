//! Synthetic EEG with a prescribed frontal alpha asymmetry and beta/alpha
//! ratio, for demos and offline sessions without a real recording.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{Band, EegRecording, SignalError, TrialMeta};

/// A 14-channel frontal/central/parietal montage.
pub const DEFAULT_MONTAGE: [&str; 14] = [
    "AF3", "F7", "F3", "FC5", "T7", "P7", "O1", "O2", "P8", "T8", "FC6", "F4", "F8", "AF4",
];

fn bins_in(band: Band, fs: f64) -> usize {
    let seg = fs.round();
    let df = fs / seg;
    let (lo, hi) = band.edges();
    (0..=(seg as usize / 2)).filter(|k| {
        let f = *k as f64 * df;
        f >= lo && f < hi
    }).count().max(1)
}

/// Builds a recording whose spectral decode (identity calibration) lands
/// near `(valence, arousal)`.
///
/// Valence sets `ln(alpha_F4 / alpha_F3) = atanh(v)`; arousal sets every
/// channel's beta/alpha density ratio to `exp(atanh(a))`.
pub fn affect_recording(
    valence: f64,
    arousal: f64,
    duration_s: f64,
    sample_rate_hz: f64,
    noise_uv: f64,
    seed: u64,
) -> Result<EegRecording, SignalError> {
    let v = valence.clamp(-0.98, 0.98);
    let a = arousal.clamp(-0.98, 0.98);
    let n = (duration_s * sample_rate_hz).round() as usize;
    let alpha_bins = bins_in(Band::Alpha, sample_rate_hz) as f64;
    let beta_bins = bins_in(Band::Beta, sample_rate_hz) as f64;
    let ratio = a.atanh().exp();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, noise_uv.max(0.0)).map_err(|e| SignalError::InvalidRecording(e.to_string()))?;
    let base_alpha = 10.0;
    let mut samples = Vec::with_capacity(DEFAULT_MONTAGE.len());
    for (ch, label) in DEFAULT_MONTAGE.iter().enumerate() {
        let alpha_amp = match *label {
            "F4" => base_alpha * (v.atanh() / 2.0).exp(),
            _ => base_alpha,
        };
        let beta_amp = alpha_amp * (ratio * beta_bins / alpha_bins).sqrt();
        let phase = ch as f64 * 0.37;
        let row = (0..n)
            .map(|t| {
                let time = t as f64 / sample_rate_hz;
                alpha_amp * (2.0 * PI * 10.0 * time + phase).sin()
                    + beta_amp * (2.0 * PI * 20.0 * time + 2.0 * phase).sin()
                    + noise.sample(&mut rng)
            })
            .collect();
        samples.push(row);
    }
    EegRecording::new(DEFAULT_MONTAGE.iter().map(|s| s.to_string()).collect(), sample_rate_hz, samples)
}

/// `n` recordings with per-axis labels drawn uniformly from `[-0.9, 0.9]`,
/// stored as 1-9 trial metadata.
pub fn labelled_trials(
    n: usize,
    duration_s: f64,
    sample_rate_hz: f64,
    noise_uv: f64,
    seed: u64,
) -> Result<Vec<EegRecording>, SignalError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let v: f64 = rng.random_range(-0.9..=0.9);
            let a: f64 = rng.random_range(-0.9..=0.9);
            let trial_seed = rng.random();
            affect_recording(v, a, duration_s, sample_rate_hz, noise_uv, trial_seed)?.with_trial_meta(TrialMeta {
                subject_id: "synthetic".into(),
                trial_id: format!("t{i:04}"),
                valence: Some(5.0 + 4.0 * v),
                arousal: Some(5.0 + 4.0 * a),
            })
        })
        .collect()
}
