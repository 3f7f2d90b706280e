use serde::{Deserialize, Serialize};

use super::MetricsError;
use crate::engine::AudioClip;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    #[default]
    Raw,
    UnitMax,
}

/// Per-section RMS.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoudnessCurve {
    pub values: Vec<f64>,
    pub normalization: Normalization,
}

impl LoudnessCurve {
    /// Divides by the maximum; an all-zero curve stays zero.
    pub fn unit_max(&self) -> LoudnessCurve {
        let m = self.values.iter().copied().fold(0.0, f64::max);
        let values = if m > 0.0 { self.values.iter().map(|v| v / m).collect() } else { self.values.clone() };
        LoudnessCurve { values, normalization: Normalization::UnitMax }
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len().max(1) as f64
    }
}

pub(crate) fn rms(x: &[f64]) -> f64 {
    (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
}

pub fn loudness_curve(clip: &AudioClip) -> Result<LoudnessCurve, MetricsError> {
    if clip.section_starts.is_empty() {
        return Err(MetricsError::NoSections);
    }
    let values = (0..clip.n_sections())
        .map(|i| {
            let span = clip.section_span(i);
            if span.is_empty() || span.end > clip.samples.len() {
                Err(MetricsError::EmptySection(i))
            } else {
                Ok(rms(&clip.samples[span]))
            }
        })
        .collect::<Result<_, _>>()?;
    Ok(LoudnessCurve { values, normalization: Normalization::Raw })
}
