use serde::{Deserialize, Serialize};

use super::{AffectState, Decoder, DecoderError};
use crate::metrics::stats::{self, StatsError};
use crate::signal::{band_powers, window_stream, EegRecording, SignalError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecoderReport {
    pub valence_acc: f64,
    pub arousal_acc: f64,
    pub valence_ccc: f64,
    pub arousal_ccc: f64,
    pub n: usize,
}

/// Binary high/low accuracy at `threshold` (1-9 scale; strictly above is
/// high) and per-axis CCC.
pub fn evaluate(
    predictions: &[AffectState],
    labels: &[AffectState],
    threshold: f64,
) -> Result<DecoderReport, DecoderError> {
    if predictions.len() != labels.len() {
        return Err(DecoderError::LengthMismatch(predictions.len(), labels.len()));
    }
    if predictions.len() < 2 {
        return Err(DecoderError::EmptyInput);
    }
    let high = |x: f64| 5.0 + 4.0 * x > threshold;
    let n = predictions.len() as f64;
    let acc = |f: fn(&AffectState) -> f64| {
        predictions.iter().zip(labels).filter(|(p, l)| high(f(p)) == high(f(l))).count() as f64 / n
    };
    let pv: Vec<f64> = predictions.iter().map(|p| p.valence).collect();
    let pa: Vec<f64> = predictions.iter().map(|p| p.arousal).collect();
    let lv: Vec<f64> = labels.iter().map(|p| p.valence).collect();
    let la: Vec<f64> = labels.iter().map(|p| p.arousal).collect();
    let ccc = |x: &[f64], y: &[f64]| {
        stats::ccc(x, y).map_err(|e| match e {
            StatsError::Degenerate => DecoderError::DegenerateVariance,
            StatsError::LengthMismatch(a, b) => DecoderError::LengthMismatch(a, b),
            _ => DecoderError::EmptyInput,
        })
    };
    Ok(DecoderReport {
        valence_acc: acc(|s| s.valence),
        arousal_acc: acc(|s| s.arousal),
        valence_ccc: ccc(&pv, &lv)?,
        arousal_ccc: ccc(&pa, &la)?,
        n: predictions.len(),
    })
}

#[derive(Debug, thiserror::Error)]
pub enum TrialError {
    #[error(transparent)]
    Signal(#[from] SignalError),
    #[error(transparent)]
    Decoder(#[from] DecoderError),
    #[error("trial {0} has no valence/arousal labels")]
    Unlabelled(usize),
}

/// Mean decoded state over the recording's windows.
pub fn decode_trial(decoder: &mut Decoder, rec: &EegRecording, win_s: f64, hop_s: f64) -> Result<AffectState, TrialError> {
    let bps = window_stream(rec, win_s, hop_s)?
        .map(|w| band_powers(&w, rec.sample_rate_hz()))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(decoder.decode_global(&bps)?)
}

/// Decodes every trial and scores it against the labels in its metadata.
pub fn evaluate_trials(
    decoder: &mut Decoder,
    trials: &[EegRecording],
    win_s: f64,
    hop_s: f64,
    threshold: f64,
) -> Result<(Vec<AffectState>, DecoderReport), TrialError> {
    let mut preds = Vec::with_capacity(trials.len());
    let mut labels = Vec::with_capacity(trials.len());
    for (i, rec) in trials.iter().enumerate() {
        let (v, a) = rec
            .trial_meta()
            .and_then(|m| Some((m.valence?, m.arousal?)))
            .ok_or(TrialError::Unlabelled(i))?;
        labels.push(AffectState::from_scale(v, a));
        preds.push(decode_trial(decoder, rec, win_s, hop_s)?);
    }
    let report = evaluate(&preds, &labels, threshold)?;
    Ok((preds, report))
}
