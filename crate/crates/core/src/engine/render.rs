use std::f64::consts::TAU;

use super::{AudioClip, NoteEvent, Score};
use crate::planner::Voice;

/// Pre-master RMS of a section at gain 1.
pub const SECTION_RMS_REF: f64 = 0.25;

struct Envelope {
    attack: f64,
    decay: f64,
    sustain: f64,
    release: f64,
}

fn envelope(v: Voice) -> Envelope {
    match v {
        Voice::SinePad => Envelope { attack: 0.08, decay: 0.2, sustain: 0.8, release: 0.3 },
        Voice::TriangleLead => Envelope { attack: 0.02, decay: 0.1, sustain: 0.7, release: 0.15 },
        Voice::Pluck => Envelope { attack: 0.003, decay: 0.35, sustain: 0.0, release: 0.05 },
        Voice::SoftNoisePerc => Envelope { attack: 0.001, decay: 0.12, sustain: 0.0, release: 0.03 },
    }
}

/// Relative level of each voice before section leveling.
pub fn voice_level(v: Voice) -> f64 {
    match v {
        Voice::SinePad => 0.5,
        Voice::TriangleLead => 0.5,
        Voice::Pluck => 0.8,
        Voice::SoftNoisePerc => 1.0,
    }
}

/// ADSR gain at time `t` for a note held `hold` seconds.
fn adsr(e: &Envelope, t: f64, hold: f64) -> f64 {
    let held = |t: f64| {
        if t < e.attack {
            t / e.attack
        } else if e.sustain == 0.0 {
            // percussive: exponential fall from the peak
            (-(t - e.attack) / e.decay).exp()
        } else if t < e.attack + e.decay {
            1.0 - (1.0 - e.sustain) * (t - e.attack) / e.decay
        } else {
            e.sustain
        }
    };
    if t < hold {
        held(t)
    } else {
        let r = t - hold;
        if r >= e.release {
            0.0
        } else {
            held(hold) * (1.0 - r / e.release)
        }
    }
}

fn oscillator(v: Voice, phase: f64) -> f64 {
    let x = phase.fract();
    match v {
        Voice::SinePad => (TAU * x).sin(),
        Voice::TriangleLead => 1.0 - 4.0 * (x - 0.5).abs(),
        Voice::Pluck => (TAU * x).sin() + 0.35 * (2.0 * TAU * x).sin() + 0.15 * (3.0 * TAU * x).sin(),
        Voice::SoftNoisePerc => (TAU * x).sin(),
    }
}

/// xorshift64*, used only for the percussion noise component.
struct Noise(u64);

impl Noise {
    fn next(&mut self) -> f64 {
        self.0 ^= self.0 >> 12;
        self.0 ^= self.0 << 25;
        self.0 ^= self.0 >> 27;
        let r = self.0.wrapping_mul(0x2545_F491_4F6C_DD1D);
        (r >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
    }
}

pub fn midi_to_hz(p: u8) -> f64 {
    440.0 * 2f64.powf((p as f64 - 69.0) / 12.0)
}

fn add_note(buf: &mut [f64], ev: &NoteEvent, tempo_bpm: f64, sr: f64, noise_seed: u64) {
    let beat_s = 60.0 / tempo_bpm;
    let start = (ev.onset_beats * beat_s * sr).round() as usize;
    let hold = ev.duration_beats * beat_s;
    let env = envelope(ev.voice);
    let end = (start + ((hold + env.release) * sr).ceil() as usize).min(buf.len());
    let f = midi_to_hz(ev.midi_pitch);
    let amp = ev.velocity * voice_level(ev.voice);
    let mut noise = Noise(noise_seed | 1);
    for (i, out) in buf.iter_mut().enumerate().take(end).skip(start) {
        let t = (i - start) as f64 / sr;
        let mut s = oscillator(ev.voice, f * t);
        if ev.voice == Voice::SoftNoisePerc {
            s = 0.6 * s + 0.8 * noise.next() * (-t / 0.03).exp();
        }
        *out += amp * adsr(&env, t, hold) * s;
    }
}

/// Additive synthesis, one section at a time.
///
/// Each section's mix is leveled to `gain * SECTION_RMS_REF` RMS, so section
/// loudness follows the planned dynamics; notes do not ring past their
/// section. The master stage is `base_gain * tanh(x)`, which keeps every
/// sample inside `[-1, 1]`.
pub fn render(score: &Score, sample_rate_hz: u32) -> AudioClip {
    let sr = sample_rate_hz as f64;
    let durations: Vec<f64> = score.sections.iter().map(|s| s.duration_s).collect();
    let starts = AudioClip::boundaries(&durations, sample_rate_hz);
    let total = (score.duration_s() * sr).round() as usize;
    let mut samples = vec![0.0; total];
    for (si, sec) in score.sections.iter().enumerate() {
        let end = starts.get(si + 1).copied().unwrap_or(total);
        let buf = &mut samples[starts[si]..end];
        for (ei, ev) in sec.events.iter().enumerate() {
            let seed = ((si as u64) << 32 | ei as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
            add_note(buf, ev, sec.control.tempo_bpm, sr, seed);
        }
        let rms = (buf.iter().map(|x| x * x).sum::<f64>() / buf.len().max(1) as f64).sqrt();
        if rms > 0.0 {
            let k = sec.control.gain * SECTION_RMS_REF / rms;
            buf.iter_mut().for_each(|x| *x *= k);
        }
    }
    let g = score.global.base_gain.clamp(0.0, 1.0);
    samples.iter_mut().for_each(|x| *x = g * x.tanh());
    AudioClip { sample_rate_hz, samples, section_starts: starts }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{GlobalControl, NoteRole, ScoreSection, SectionControl};
    use rustfft::{num_complex::Complex, FftPlanner};

    fn one_section(events: Vec<NoteEvent>, gain: f64, dur: f64) -> Score {
        Score {
            global: GlobalControl {
                scale: vec![0, 2, 4, 5, 7, 9, 11],
                root: 0,
                register: (40, 90),
                instruments: vec![Voice::SinePad],
                base_gain: 1.0,
            },
            sections: vec![ScoreSection {
                control: SectionControl { index: 1, tempo_bpm: 60.0, gain, note_density: 1.0, tension: 0.0 },
                duration_s: dur,
                events,
            }],
        }
    }

    #[test]
    fn empty_score_is_silent_with_full_length() {
        let c = render(&one_section(vec![], 1.0, 2.0), 8000);
        assert_eq!(c.samples.len(), 16_000);
        assert!(c.samples.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn a4_pad_peaks_at_440() {
        let ev = NoteEvent { onset_beats: 0.0, duration_beats: 1.0, midi_pitch: 69, velocity: 1.0, voice: Voice::SinePad, role: NoteRole::Melody };
        let sr = 32_000;
        let c = render(&one_section(vec![ev], 1.0, 1.0), sr);
        let mut buf: Vec<Complex<f64>> = c.samples.iter().map(|&x| Complex::new(x, 0.0)).collect();
        FftPlanner::new().plan_fft_forward(buf.len()).process(&mut buf);
        let peak = (1..buf.len() / 2).max_by(|&a, &b| buf[a].norm().total_cmp(&buf[b].norm())).unwrap();
        let hz = peak as f64 * sr as f64 / c.samples.len() as f64;
        assert!((hz - 440.0).abs() <= 1.0, "{hz}");
    }

    #[test]
    fn samples_bounded_even_when_hot() {
        let evs: Vec<NoteEvent> = (0..12)
            .map(|i| NoteEvent {
                onset_beats: 0.0,
                duration_beats: 2.0,
                midi_pitch: 48 + i,
                velocity: 1.0,
                voice: Voice::SoftNoisePerc,
                role: NoteRole::Pulse,
            })
            .collect();
        let mut s = one_section(evs, 1.0, 2.0);
        s.sections[0].control.gain = 1.0;
        let c = render(&s, 8000);
        assert!(c.samples.iter().all(|x| x.abs() <= 1.0));
    }

    #[test]
    fn adsr_shape() {
        let e = envelope(Voice::SinePad);
        assert_eq!(adsr(&e, 0.0, 1.0), 0.0);
        assert!((adsr(&e, 0.08, 1.0) - 1.0).abs() < 1e-12);
        assert!((adsr(&e, 0.5, 1.0) - 0.8).abs() < 1e-12);
        assert_eq!(adsr(&e, 1.3, 1.0), 0.0);
    }
}
