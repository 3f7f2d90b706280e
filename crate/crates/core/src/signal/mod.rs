//! EEG ingestion, windowing and spectral features.

mod io;
mod spectral;
pub mod synth;
mod window;

pub use io::{load_recording, write_binary, write_csv, RecordingFormat};
pub use spectral::{band_powers, periodogram, welch_psd, Band, BandPower, BandValues, Psd, Window};
pub use window::{window_count, window_stream, Windows};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Sample rate used when none is given (DEAP preprocessed data).
pub const DEFAULT_SAMPLE_RATE_HZ: f64 = 128.0;
/// Analysis window length in seconds.
pub const DEFAULT_WINDOW_S: f64 = 4.0;
/// Hop between window starts (4 s windows with 2 s overlap).
pub const DEFAULT_HOP_S: f64 = 2.0;

#[derive(Debug, Error)]
pub enum SignalError {
    #[error("file not found: {0}")]
    FileNotFound(String),
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("non-finite sample on channel {channel} at index {index}")]
    NonFiniteSample { channel: String, index: usize },
    #[error("invalid recording: {0}")]
    InvalidRecording(String),
    #[error("window of {win_s} s exceeds recording duration {duration_s} s")]
    WindowTooLong { win_s: f64, duration_s: f64 },
    #[error("invalid hop {0} s")]
    InvalidHop(f64),
    #[error("window of {0} samples is shorter than one second")]
    WindowTooShort(usize),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Trial-level metadata; labels are on the 1-9 rating scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialMeta {
    pub subject_id: String,
    pub trial_id: String,
    pub valence: Option<f64>,
    pub arousal: Option<f64>,
}

/// A multichannel recording, stored channel-major (`samples[ch][t]`) in µV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EegRecording {
    channels: Vec<String>,
    sample_rate_hz: f64,
    samples: Vec<Vec<f64>>,
    trial_meta: Option<TrialMeta>,
}

impl EegRecording {
    pub fn new(
        channels: Vec<String>,
        sample_rate_hz: f64,
        samples: Vec<Vec<f64>>,
    ) -> Result<Self, SignalError> {
        if channels.is_empty() {
            return Err(SignalError::InvalidRecording("no channels".into()));
        }
        if !(sample_rate_hz.is_finite() && sample_rate_hz > 0.0) {
            return Err(SignalError::InvalidRecording(format!(
                "sample rate {sample_rate_hz} must be positive"
            )));
        }
        if samples.len() != channels.len() {
            return Err(SignalError::MalformedHeader(format!(
                "{} channel labels but {} channel rows",
                channels.len(),
                samples.len()
            )));
        }
        let n = samples[0].len();
        if n == 0 {
            return Err(SignalError::InvalidRecording("no samples".into()));
        }
        for (label, row) in channels.iter().zip(&samples) {
            if row.len() != n {
                return Err(SignalError::MalformedHeader(format!(
                    "channel {label} has {} samples, expected {n}",
                    row.len()
                )));
            }
            if let Some(index) = row.iter().position(|x| !x.is_finite()) {
                return Err(SignalError::NonFiniteSample { channel: label.clone(), index });
            }
        }
        Ok(Self { channels, sample_rate_hz, samples, trial_meta: None })
    }

    pub fn with_trial_meta(mut self, meta: TrialMeta) -> Result<Self, SignalError> {
        for label in [meta.valence, meta.arousal].into_iter().flatten() {
            if !(1.0..=9.0).contains(&label) {
                return Err(SignalError::InvalidRecording(format!(
                    "trial label {label} outside [1, 9]"
                )));
            }
        }
        self.trial_meta = Some(meta);
        Ok(self)
    }

    pub fn channels(&self) -> &[String] {
        &self.channels
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    pub fn samples(&self) -> &[Vec<f64>] {
        &self.samples
    }

    pub fn trial_meta(&self) -> Option<&TrialMeta> {
        self.trial_meta.as_ref()
    }

    pub fn n_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn n_samples(&self) -> usize {
        self.samples[0].len()
    }

    pub fn duration_s(&self) -> f64 {
        self.n_samples() as f64 / self.sample_rate_hz
    }

    pub fn channel_index(&self, label: &str) -> Option<usize> {
        self.channels.iter().position(|c| c == label)
    }
}

/// A slice of a recording. `samples` is channel-major like [`EegRecording`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EegWindow {
    pub start_s: f64,
    pub duration_s: f64,
    pub sample_rate_hz: f64,
    pub channels: Vec<String>,
    pub samples: Vec<Vec<f64>>,
}

impl EegWindow {
    pub fn n_samples(&self) -> usize {
        self.samples.first().map_or(0, Vec::len)
    }

    /// Checks the shape and finiteness of a window received from outside.
    pub fn validate(&self) -> Result<(), SignalError> {
        if self.channels.is_empty() || self.samples.len() != self.channels.len() {
            return Err(SignalError::MalformedHeader(format!(
                "{} labels for {} channel rows",
                self.channels.len(),
                self.samples.len()
            )));
        }
        if !(self.sample_rate_hz.is_finite() && self.sample_rate_hz > 0.0) {
            return Err(SignalError::InvalidRecording("sample rate must be positive".into()));
        }
        let n = self.n_samples();
        for (label, row) in self.channels.iter().zip(&self.samples) {
            if row.len() != n {
                return Err(SignalError::MalformedHeader(format!("ragged channel {label}")));
            }
            if let Some(index) = row.iter().position(|x| !x.is_finite()) {
                return Err(SignalError::NonFiniteSample { channel: label.clone(), index });
            }
        }
        Ok(())
    }
}
