use super::MetricsError;
use crate::engine::AudioClip;

const FRAME_S: f64 = 0.010;
const HOP_S: f64 = 0.005;
const MIN_BPM: f64 = 40.0;
const MAX_BPM: f64 = 200.0;
/// Log-normal tempo prior: centre and width in octaves.
const PRIOR_BPM: f64 = 120.0;
const PRIOR_OCTAVES: f64 = 1.5;

/// Half-wave rectified frame-RMS difference, smoothed.
fn onset_envelope(x: &[f64], sr: f64) -> Vec<f64> {
    let frame = ((FRAME_S * sr).round() as usize).max(1);
    let hop = ((HOP_S * sr).round() as usize).max(1);
    let n = if x.len() >= frame { (x.len() - frame) / hop + 1 } else { 0 };
    let level: Vec<f64> = (0..n)
        .map(|k| {
            let f = &x[k * hop..k * hop + frame];
            (f.iter().map(|v| v * v).sum::<f64>() / frame as f64).sqrt()
        })
        .collect();
    let raw: Vec<f64> = std::iter::once(0.0).chain(level.windows(2).map(|w| (w[1] - w[0]).max(0.0))).collect();
    // triangular smoothing spreads each onset over neighbouring lags
    const K: [f64; 5] = [1.0, 2.0, 3.0, 2.0, 1.0];
    (0..raw.len())
        .map(|i| {
            K.iter()
                .enumerate()
                .filter_map(|(j, k)| (i + j).checked_sub(2).and_then(|p| raw.get(p)).map(|v| k * v))
                .sum::<f64>()
                / 9.0
        })
        .collect()
}

fn prior(bpm: f64) -> f64 {
    let z = (bpm / PRIOR_BPM).log2() / PRIOR_OCTAVES;
    (-0.5 * z * z).exp()
}

/// Tempo from the biased autocorrelation of the onset envelope, weighted by
/// a log-normal prior and refined by parabolic interpolation. Lags span
/// 40 to 200 BPM.
pub fn estimate_tempo(clip: &AudioClip) -> Result<f64, MetricsError> {
    let sr = clip.sample_rate_hz as f64;
    let dur = clip.duration_s();
    if dur < 2.0 {
        return Err(MetricsError::TooShort(dur));
    }
    let env = onset_envelope(&clip.samples, sr);
    let n = env.len();
    let mean = env.iter().sum::<f64>() / n as f64;
    let c: Vec<f64> = env.iter().map(|v| v - mean).collect();
    let energy = c.iter().map(|v| v * v).sum::<f64>();
    if energy <= 0.0 {
        return Err(MetricsError::NoPeriodicity);
    }
    let hop_s = ((HOP_S * sr).round()).max(1.0) / sr;
    let lag_min = (60.0 / MAX_BPM / hop_s).floor().max(1.0) as usize;
    let lag_max = ((60.0 / MIN_BPM / hop_s).ceil() as usize).min(n - 1);
    if lag_max <= lag_min + 1 {
        return Err(MetricsError::TooShort(dur));
    }
    let acf = |l: usize| c[..n - l].iter().zip(&c[l..]).map(|(a, b)| a * b).sum::<f64>() / n as f64;
    let r: Vec<f64> = (lag_min - 1..=lag_max + 1).map(acf).collect();
    let at = |l: usize| r[l + 1 - lag_min];

    let best = (lag_min..=lag_max)
        .max_by(|&a, &b| {
            let sa = at(a) * prior(60.0 / (a as f64 * hop_s));
            let sb = at(b) * prior(60.0 / (b as f64 * hop_s));
            sa.total_cmp(&sb).then(b.cmp(&a))
        })
        .expect("non-empty lag range");
    if at(best) <= 0.0 {
        return Err(MetricsError::NoPeriodicity);
    }
    let (y0, y1, y2) = (at(best - 1), at(best), at(best + 1));
    let denom = y0 - 2.0 * y1 + y2;
    let shift = if denom < 0.0 { (0.5 * (y0 - y2) / denom).clamp(-0.5, 0.5) } else { 0.0 };
    Ok((60.0 / ((best as f64 + shift) * hop_s)).clamp(MIN_BPM, MAX_BPM))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn clicks(bpm: f64, secs: f64, sr: u32) -> AudioClip {
        let n = (secs * sr as f64) as usize;
        let period = 60.0 / bpm * sr as f64;
        let mut s = vec![0.0; n];
        let mut k = 0.0;
        while (k * period) as usize + 40 < n {
            let at = (k * period).round() as usize;
            for j in 0..40 {
                s[at + j] = 0.8 * (-(j as f64) / 8.0).exp() * if j % 2 == 0 { 1.0 } else { -1.0 };
            }
            k += 1.0;
        }
        AudioClip { sample_rate_hz: sr, samples: s, section_starts: vec![0] }
    }

    #[test]
    fn click_120() {
        let t = estimate_tempo(&clicks(120.0, 10.0, 16_000)).unwrap();
        assert!((t - 120.0).abs() <= 2.0, "{t}");
    }

    #[test]
    fn click_60_no_octave_error() {
        let t = estimate_tempo(&clicks(60.0, 10.0, 16_000)).unwrap();
        assert!((t - 60.0).abs() <= 2.0, "{t}");
    }

    #[test]
    fn click_sweep() {
        for bpm in [45.0, 72.0, 90.0, 100.0, 137.0, 180.0] {
            let t = estimate_tempo(&clicks(bpm, 10.0, 8000)).unwrap();
            assert!((t - bpm).abs() <= 2.0, "{bpm} -> {t}");
        }
    }

    #[test]
    fn silence_and_short() {
        let c = AudioClip { sample_rate_hz: 8000, samples: vec![0.0; 32_000], section_starts: vec![0] };
        assert_eq!(estimate_tempo(&c), Err(MetricsError::NoPeriodicity));
        let c = AudioClip { sample_rate_hz: 8000, samples: vec![0.0; 8000], section_starts: vec![0] };
        assert!(matches!(estimate_tempo(&c), Err(MetricsError::TooShort(_))));
    }
}
