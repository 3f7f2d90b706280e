use std::io::Cursor;
use std::path::Path;

use super::{AudioClip, EngineError};

fn spec(sample_rate: u32) -> hound::WavSpec {
    hound::WavSpec { channels: 1, sample_rate, bits_per_sample: 16, sample_format: hound::SampleFormat::Int }
}

fn to_i16(x: f64) -> i16 {
    (x * 32768.0).round().clamp(i16::MIN as f64, i16::MAX as f64) as i16
}

/// 16-bit PCM mono RIFF bytes.
pub fn wav_bytes(clip: &AudioClip) -> Result<Vec<u8>, EngineError> {
    let mut cur = Cursor::new(Vec::with_capacity(44 + clip.samples.len() * 2));
    {
        let mut w = hound::WavWriter::new(&mut cur, spec(clip.sample_rate_hz))?;
        let mut w16 = w.get_i16_writer(clip.samples.len() as u32);
        for &x in &clip.samples {
            w16.write_sample(to_i16(x));
        }
        w16.flush()?;
        w.finalize()?;
    }
    Ok(cur.into_inner())
}

pub fn write_wav(clip: &AudioClip, path: &Path) -> Result<(), EngineError> {
    std::fs::write(path, wav_bytes(clip)?)?;
    Ok(())
}

/// Reads a mono or multichannel integer/float WAV, keeping the first
/// channel; returns `(sample_rate_hz, samples)` scaled to `[-1, 1]`.
pub fn read_wav(path: &Path) -> Result<(u32, Vec<f64>), EngineError> {
    let mut r = hound::WavReader::open(path)?;
    let s = r.spec();
    let ch = s.channels.max(1) as usize;
    let all: Vec<f64> = match s.sample_format {
        hound::SampleFormat::Float => r.samples::<f32>().map(|x| x.map(f64::from)).collect::<Result<_, _>>()?,
        hound::SampleFormat::Int => {
            let full = (1i64 << (s.bits_per_sample - 1)) as f64;
            r.samples::<i32>().map(|x| x.map(|v| v as f64 / full)).collect::<Result<_, _>>()?
        }
    };
    Ok((s.sample_rate, all.into_iter().step_by(ch).map(|x| x.clamp(-1.0, 1.0)).collect()))
}
