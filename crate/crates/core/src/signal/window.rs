use super::{EegRecording, EegWindow, SignalError};

/// Number of windows `window_stream` yields for integer sample counts.
pub fn window_count(n_samples: usize, win_n: usize, hop_n: usize) -> usize {
    if hop_n == 0 || win_n == 0 || win_n > n_samples {
        return 0;
    }
    (n_samples - win_n) / hop_n + 1
}

/// Sliding windows over a recording, in increasing start order.
///
/// Lengths are snapped to whole samples (`round(s * fs)`), so with the
/// default 4 s / 2 s at 128 Hz a 60 s recording yields 29 windows.
pub fn window_stream(
    rec: &EegRecording,
    win_s: f64,
    hop_s: f64,
) -> Result<Windows<'_>, SignalError> {
    if !(hop_s.is_finite() && hop_s > 0.0) {
        return Err(SignalError::InvalidHop(hop_s));
    }
    let fs = rec.sample_rate_hz();
    let win_n = (win_s * fs).round() as usize;
    let hop_n = (hop_s * fs).round() as usize;
    if win_n > rec.n_samples() {
        return Err(SignalError::WindowTooLong { win_s, duration_s: rec.duration_s() });
    }
    if hop_n == 0 || hop_n > win_n {
        return Err(SignalError::InvalidHop(hop_s));
    }
    if win_n == 0 {
        return Err(SignalError::WindowTooShort(0));
    }
    Ok(Windows { rec, win_n, hop_n, next: 0, count: window_count(rec.n_samples(), win_n, hop_n) })
}

pub struct Windows<'a> {
    rec: &'a EegRecording,
    win_n: usize,
    hop_n: usize,
    next: usize,
    count: usize,
}

impl Iterator for Windows<'_> {
    type Item = EegWindow;

    fn next(&mut self) -> Option<EegWindow> {
        if self.next >= self.count {
            return None;
        }
        let start = self.next * self.hop_n;
        self.next += 1;
        let fs = self.rec.sample_rate_hz();
        Some(EegWindow {
            start_s: start as f64 / fs,
            duration_s: self.win_n as f64 / fs,
            sample_rate_hz: fs,
            channels: self.rec.channels().to_vec(),
            samples: self
                .rec
                .samples()
                .iter()
                .map(|row| row[start..start + self.win_n].to_vec())
                .collect(),
        })
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let left = self.count - self.next;
        (left, Some(left))
    }
}

impl ExactSizeIterator for Windows<'_> {}
