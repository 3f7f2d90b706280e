use std::f64::consts::PI;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::{EegWindow, SignalError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Window {
    Hann,
    Rectangular,
}

impl Window {
    fn coefficients(self, n: usize) -> Vec<f64> {
        match self {
            // Periodic Hann, the usual choice for spectral averaging.
            Window::Hann => (0..n).map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos()).collect(),
            Window::Rectangular => vec![1.0; n],
        }
    }
}

/// One-sided power spectral density.
#[derive(Debug, Clone, PartialEq)]
pub struct Psd {
    /// Bin spacing in Hz.
    pub df: f64,
    /// Density per bin, bins `0..=n/2`.
    pub density: Vec<f64>,
}

impl Psd {
    pub fn freq(&self, bin: usize) -> f64 {
        bin as f64 * self.df
    }

    /// Sum of density times bin width over all bins.
    pub fn total_power(&self) -> f64 {
        self.density.iter().sum::<f64>() * self.df
    }
}

/// Averaged, mean-detrended periodogram (Welch).
///
/// Scaling is `|X_k|^2 / (fs * sum(w^2))`, doubled for bins strictly
/// between DC and Nyquist, so `sum(density) * df` is the windowed variance.
pub fn welch_psd(signal: &[f64], fs: f64, segment_len: usize, step: usize, window: Window) -> Psd {
    assert!(segment_len >= 2 && step >= 1 && signal.len() >= segment_len);
    let w = window.coefficients(segment_len);
    let w_energy: f64 = w.iter().map(|x| x * x).sum();
    let fft = FftPlanner::<f64>::new().plan_fft_forward(segment_len);
    let n_bins = segment_len / 2 + 1;
    let mut acc = vec![0.0; n_bins];
    let mut buf = vec![Complex::new(0.0, 0.0); segment_len];
    let mut n_segments = 0usize;

    let mut start = 0;
    while start + segment_len <= signal.len() {
        let seg = &signal[start..start + segment_len];
        let mean = seg.iter().sum::<f64>() / segment_len as f64;
        for ((b, &x), &wi) in buf.iter_mut().zip(seg).zip(&w) {
            *b = Complex::new((x - mean) * wi, 0.0);
        }
        fft.process(&mut buf);
        for (k, a) in acc.iter_mut().enumerate() {
            *a += buf[k].norm_sqr();
        }
        n_segments += 1;
        start += step;
    }

    let scale = 1.0 / (fs * w_energy * n_segments as f64);
    let nyquist = if segment_len % 2 == 0 { Some(segment_len / 2) } else { None };
    let density = acc
        .iter()
        .enumerate()
        .map(|(k, &p)| {
            let one_sided = if k == 0 || Some(k) == nyquist { 1.0 } else { 2.0 };
            p * scale * one_sided
        })
        .collect();
    Psd { df: fs / segment_len as f64, density }
}

/// Single-segment periodogram over the whole signal.
pub fn periodogram(signal: &[f64], fs: f64, window: Window) -> Psd {
    welch_psd(signal, fs, signal.len(), signal.len(), window)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Band {
    Theta,
    Alpha,
    Beta,
    Gamma,
}

impl Band {
    pub const ALL: [Band; 4] = [Band::Theta, Band::Alpha, Band::Beta, Band::Gamma];

    /// Half-open `[lo, hi)` edges in Hz.
    pub fn edges(self) -> (f64, f64) {
        match self {
            Band::Theta => (4.0, 8.0),
            Band::Alpha => (8.0, 13.0),
            Band::Beta => (13.0, 30.0),
            Band::Gamma => (30.0, 45.0),
        }
    }
}

/// Mean spectral density per band, µV²/Hz.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BandValues {
    pub theta: f64,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl BandValues {
    pub fn get(&self, band: Band) -> f64 {
        match band {
            Band::Theta => self.theta,
            Band::Alpha => self.alpha,
            Band::Beta => self.beta,
            Band::Gamma => self.gamma,
        }
    }

    fn set(&mut self, band: Band, v: f64) {
        match band {
            Band::Theta => self.theta = v,
            Band::Alpha => self.alpha = v,
            Band::Beta => self.beta = v,
            Band::Gamma => self.gamma = v,
        }
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self { theta: self.theta * c, alpha: self.alpha * c, beta: self.beta * c, gamma: self.gamma * c }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandPower {
    pub channels: Vec<String>,
    pub values: Vec<BandValues>,
}

impl BandPower {
    pub fn channel(&self, label: &str) -> Option<&BandValues> {
        self.channels.iter().position(|c| c == label).map(|i| &self.values[i])
    }
}

/// Welch band powers per channel: 1 s Hann segments with 50% overlap.
pub fn band_powers(win: &EegWindow, sample_rate_hz: f64) -> Result<BandPower, SignalError> {
    let seg = sample_rate_hz.round() as usize;
    let n = win.n_samples();
    if seg < 2 || n < seg {
        return Err(SignalError::WindowTooShort(n));
    }
    let step = (seg / 2).max(1);
    let values = win
        .samples
        .iter()
        .map(|row| {
            let psd = welch_psd(row, sample_rate_hz, seg, step, Window::Hann);
            let mut bv = BandValues::default();
            for band in Band::ALL {
                let (lo, hi) = band.edges();
                let (sum, count) = psd
                    .density
                    .iter()
                    .enumerate()
                    .filter(|(k, _)| {
                        let f = psd.freq(*k);
                        f >= lo && f < hi
                    })
                    .fold((0.0, 0usize), |(s, c), (_, d)| (s + d, c + 1));
                bv.set(band, if count == 0 { 0.0 } else { sum / count as f64 });
            }
            bv
        })
        .collect();
    Ok(BandPower { channels: win.channels.clone(), values })
}
