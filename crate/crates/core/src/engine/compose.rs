use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{GlobalControl, NoteEvent, NoteRole, Score, ScoreSection, SectionControl};
use crate::planner::Voice;

const VELOCITY_JITTER: f64 = 0.05;
const MAX_SUBDIVISION: usize = 4;
const MAX_NOTE_BEATS: f64 = 2.0;

/// Error-diffusion rounding with one random offset: each step's count is
/// `x` in expectation and running totals never drift by a whole unit.
struct Dither {
    offset: f64,
    total: f64,
}

impl Dither {
    fn new(rng: &mut ChaCha8Rng) -> Self {
        Self { offset: rng.random(), total: 0.0 }
    }

    fn take(&mut self, x: f64) -> usize {
        let before = (self.total + self.offset).floor();
        self.total += x.max(0.0);
        ((self.total + self.offset).floor() - before) as usize
    }
}

fn pick(voices: &[Voice], prefs: &[Voice], exclude: Option<Voice>) -> Option<Voice> {
    prefs.iter().copied().find(|v| voices.contains(v) && Some(*v) != exclude)
}

/// Pitches available in the register with their scale-degree number.
pub(crate) fn pitch_grid(global: &GlobalControl) -> Vec<(u8, usize)> {
    (global.register.0..=global.register.1)
        .filter_map(|p| {
            let pc = (p as i32 - global.root as i32).rem_euclid(12) as u8;
            global.scale.iter().position(|&d| d == pc).map(|deg| (p, deg))
        })
        .collect()
}

pub(crate) fn is_triad(degree: usize) -> bool {
    matches!(degree, 0 | 2 | 4)
}

/// Procedural score.
///
/// A section with positive density gets a pulse note on the lowest tonic
/// at every beat, played by a percussive voice. Melody notes come on top:
/// `note_density * beats` of them, dithered across sections, placed on
/// beats first and then on even subdivisions. The non-triad share of
/// melody notes is `tension`, dithered the same way; melody pitches follow
/// a random walk of one or two scale steps snapped to the nearest tone of
/// the required class.
pub fn compose(global: &GlobalControl, sections: &[SectionControl], duration_s: f64, seed: u64) -> Score {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut notes = Dither::new(&mut rng);
    let mut tense = Dither::new(&mut rng);
    let grid = pitch_grid(global);
    let section_s = duration_s / sections.len().max(1) as f64;

    let pulse_voice = pick(&global.instruments, &[Voice::SoftNoisePerc, Voice::Pluck], None)
        .or_else(|| global.instruments.first().copied())
        .unwrap_or(Voice::Pluck);
    let melody_voice = pick(
        &global.instruments,
        &[Voice::TriangleLead, Voice::SinePad, Voice::Pluck, Voice::SoftNoisePerc],
        Some(pulse_voice),
    )
    .unwrap_or(pulse_voice);
    let pulse_pitch = grid.iter().find(|(_, d)| *d == 0).or(grid.first()).map_or(global.register.0, |g| g.0);

    // the walk starts at the tonic closest to the middle of the register
    let mid = (global.register.0 as isize + global.register.1 as isize) / 2;
    let mut idx = grid
        .iter()
        .enumerate()
        .filter(|(_, (_, d))| *d == 0)
        .min_by_key(|(_, (p, _))| (*p as isize - mid).unsigned_abs())
        .map_or(0, |(i, _)| i);

    let out = sections
        .iter()
        .map(|ctl| {
            let beats = section_s * ctl.tempo_bpm / 60.0;
            let mut events = Vec::new();
            let n = notes.take(ctl.note_density * beats);
            if ctl.note_density <= 0.0 || grid.is_empty() {
                return ScoreSection { control: *ctl, duration_s: section_s, events };
            }
            let velocity = |rng: &mut ChaCha8Rng| {
                (ctl.gain + rng.random_range(-VELOCITY_JITTER..=VELOCITY_JITTER)).clamp(0.0, 1.0)
            };

            let on: Vec<f64> = (0..beats.ceil() as usize).map(|k| k as f64).filter(|&b| b < beats).collect();
            for &b in &on {
                events.push(NoteEvent {
                    onset_beats: b,
                    duration_beats: (beats - b).min(1.0),
                    midi_pitch: pulse_pitch,
                    velocity: velocity(&mut rng),
                    voice: pulse_voice,
                    role: NoteRole::Pulse,
                });
            }

            let subdiv = if on.is_empty() { 1 } else { n.div_ceil(on.len()).clamp(1, MAX_SUBDIVISION) };
            let off: Vec<f64> = on
                .iter()
                .flat_map(|&k| (1..subdiv).map(move |j| k + j as f64 / subdiv as f64))
                .filter(|&b| b < beats)
                .collect();
            let n = n.min(on.len() + off.len());
            let mut onsets: Vec<f64> = if n <= on.len() {
                sample(&mut rng, on.len(), n).into_iter().map(|i| on[i]).collect()
            } else {
                let mut v = on.clone();
                v.extend(sample(&mut rng, off.len(), n - on.len()).into_iter().map(|i| off[i]));
                v
            };
            onsets.sort_by(f64::total_cmp);

            let n_tense = tense.take(ctl.tension.clamp(0.0, 1.0) * n as f64).min(n);
            let tense_idx = sample(&mut rng, n.max(1), n_tense).into_vec();

            for (i, &onset) in onsets.iter().enumerate() {
                let step: isize = [-2, -1, 1, 2][rng.random_range(0..4)];
                let proposal = (idx as isize + step).clamp(0, grid.len() as isize - 1) as usize;
                idx = nearest_of_class(&grid, proposal, !tense_idx.contains(&i));
                let next = onsets.get(i + 1).copied().unwrap_or(beats);
                events.push(NoteEvent {
                    onset_beats: onset,
                    duration_beats: (next - onset).min(MAX_NOTE_BEATS),
                    midi_pitch: grid[idx].0,
                    velocity: velocity(&mut rng),
                    voice: melody_voice,
                    role: NoteRole::Melody,
                });
            }
            // stable: pulse stays ahead of a melody note on the same beat
            events.sort_by(|a, b| a.onset_beats.total_cmp(&b.onset_beats));
            ScoreSection { control: *ctl, duration_s: section_s, events }
        })
        .collect();
    Score { global: global.clone(), sections: out }
}

/// Closest grid index to `from` whose degree class matches; ties go down.
fn nearest_of_class(grid: &[(u8, usize)], from: usize, triad: bool) -> usize {
    (0..grid.len())
        .filter(|&i| is_triad(grid[i].1) == triad)
        .min_by_key(|&i| (i.abs_diff(from), i))
        .unwrap_or(from)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn global() -> GlobalControl {
        GlobalControl {
            scale: vec![0, 2, 4, 5, 7, 9, 11],
            root: 0,
            register: (48, 72),
            instruments: vec![Voice::SinePad, Voice::Pluck, Voice::SoftNoisePerc],
            base_gain: 0.8,
        }
    }

    fn section(density: f64, tension: f64) -> SectionControl {
        SectionControl { index: 1, tempo_bpm: 96.0, gain: 0.6, note_density: density, tension }
    }

    fn melody(s: &Score) -> Vec<&NoteEvent> {
        s.sections.iter().flat_map(|s| &s.events).filter(|e| e.role == NoteRole::Melody).collect()
    }

    #[test]
    fn deterministic_for_seed() {
        let s = [section(0.8, 0.3), section(1.2, 0.5)];
        assert_eq!(compose(&global(), &s, 5.0, 4).to_canonical_json(), compose(&global(), &s, 5.0, 4).to_canonical_json());
        assert_ne!(compose(&global(), &s, 5.0, 4), compose(&global(), &s, 5.0, 5));
    }

    #[test]
    fn zero_density_is_silent() {
        let sc = compose(&global(), &[section(0.0, 0.5), section(1.0, 0.5)], 5.0, 1);
        assert!(sc.sections[0].events.is_empty());
        assert!(!sc.sections[1].events.is_empty());
    }

    #[test]
    fn melody_count_expectation() {
        // 2.5 s at 96 BPM is 4 beats; 2 notes per beat expects 8
        let counts: Vec<usize> =
            (0..100).map(|seed| melody(&compose(&global(), &[section(2.0, 0.3)], 2.5, seed)).len()).collect();
        assert!(counts.iter().all(|&c| (4..=12).contains(&c)));
        let mean = counts.iter().sum::<usize>() as f64 / 100.0;
        assert!((mean - 8.0).abs() <= 0.15 * 8.0, "{mean}");
    }

    #[test]
    fn fractional_density_is_unbiased_and_tight() {
        let counts: Vec<usize> =
            (0..400).map(|seed| melody(&compose(&global(), &[section(0.55, 0.3); 4], 10.0, seed)).len()).collect();
        // 4 sections x 4 beats x 0.55 = 8.8 expected; dithering keeps the total within one note
        assert!(counts.iter().all(|&c| c == 8 || c == 9));
        let mean = counts.iter().sum::<usize>() as f64 / 400.0;
        assert!((mean - 8.8).abs() < 0.1, "{mean}");
    }

    #[test]
    fn pulse_on_every_beat() {
        let sc = compose(&global(), &[section(0.3, 0.3)], 2.5, 0);
        let pulses: Vec<f64> =
            sc.sections[0].events.iter().filter(|e| e.role == NoteRole::Pulse).map(|e| e.onset_beats).collect();
        assert_eq!(pulses, vec![0.0, 1.0, 2.0, 3.0]);
    }

    #[test]
    fn score_invariants_hold() {
        for seed in 0..30 {
            let sc = compose(&global(), &[section(1.4, 0.2), section(0.3, 0.9), section(1.0, 0.0)], 7.5, seed);
            sc.validate().unwrap();
            for s in &sc.sections {
                for e in &s.events {
                    assert!((e.velocity - s.control.gain).abs() <= 0.1);
                    assert!(e.onset_beats + e.duration_beats <= s.beats() + 1e-9);
                }
            }
        }
    }

    #[test]
    fn tension_sets_non_triad_fraction() {
        let g = global();
        let grid = pitch_grid(&g);
        let count = |t: f64| {
            let sc = compose(&g, &[section(1.0, t); 4], 10.0, 2);
            let m = melody(&sc);
            let non = m.iter().filter(|e| !is_triad(grid.iter().find(|(p, _)| *p == e.midi_pitch).unwrap().1)).count();
            (non, m.len())
        };
        assert_eq!(count(0.0).0, 0);
        let (non, total) = count(1.0);
        assert_eq!(non, total);
    }
}
