use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{EegRecording, SignalError};

const MAGIC: &[u8; 4] = b"EEG1";

/// On-disk recording formats.
///
/// CSV carries no sample rate, so the caller states it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RecordingFormat {
    Csv { sample_rate_hz: f64 },
    Binary,
}

pub fn load_recording(path: &Path, format: RecordingFormat) -> Result<EegRecording, SignalError> {
    if !path.exists() {
        return Err(SignalError::FileNotFound(path.display().to_string()));
    }
    match format {
        RecordingFormat::Csv { sample_rate_hz } => load_csv(path, sample_rate_hz),
        RecordingFormat::Binary => load_binary(path),
    }
}

fn load_csv(path: &Path, sample_rate_hz: f64) -> Result<EegRecording, SignalError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_path(path)
        .map_err(csv_err)?;
    let header = reader.headers().map_err(csv_err)?.clone();
    if header.len() < 2 || header.get(0).map(str::trim) != Some("time") {
        return Err(SignalError::MalformedHeader(
            "expected header `time,<ch1>,<ch2>,...`".into(),
        ));
    }
    let channels: Vec<String> = header.iter().skip(1).map(|s| s.trim().to_string()).collect();
    let mut samples = vec![Vec::new(); channels.len()];
    for (row_idx, record) in reader.records().enumerate() {
        let record = record.map_err(csv_err)?;
        if record.len() != header.len() {
            return Err(SignalError::MalformedHeader(format!(
                "row {row_idx} has {} columns, header has {}",
                record.len(),
                header.len()
            )));
        }
        for (ch, field) in record.iter().skip(1).enumerate() {
            let value: f64 = field.trim().parse().map_err(|_| {
                SignalError::MalformedHeader(format!("row {row_idx} column {}: `{field}`", ch + 1))
            })?;
            if !value.is_finite() {
                return Err(SignalError::NonFiniteSample {
                    channel: channels[ch].clone(),
                    index: row_idx,
                });
            }
            samples[ch].push(value);
        }
    }
    EegRecording::new(channels, sample_rate_hz, samples)
}

fn csv_err(e: csv::Error) -> SignalError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => SignalError::Io(io),
        other => SignalError::MalformedHeader(format!("{other:?}")),
    }
}

fn load_binary(path: &Path) -> Result<EegRecording, SignalError> {
    let mut bytes = Vec::new();
    BufReader::new(File::open(path)?).read_to_end(&mut bytes)?;
    let mut cur = Cursor { bytes: &bytes, pos: 0 };

    if cur.take(4)? != MAGIC {
        return Err(SignalError::MalformedHeader("missing EEG1 magic".into()));
    }
    let n_channels = cur.u32()? as usize;
    let n_samples = cur.u32()? as usize;
    let sample_rate_hz = f64::from_le_bytes(cur.take(8)?.try_into().unwrap());
    if n_channels == 0 || n_samples == 0 {
        return Err(SignalError::MalformedHeader("zero channels or samples".into()));
    }
    let mut channels = Vec::with_capacity(n_channels);
    for _ in 0..n_channels {
        let len = u16::from_le_bytes(cur.take(2)?.try_into().unwrap()) as usize;
        let label = std::str::from_utf8(cur.take(len)?)
            .map_err(|_| SignalError::MalformedHeader("channel label is not UTF-8".into()))?;
        channels.push(label.to_string());
    }

    let row_bytes = n_samples * 4;
    let remaining = bytes.len() - cur.pos;
    if remaining != n_channels * row_bytes {
        return Err(SignalError::MalformedHeader(format!(
            "header declares {n_channels} channels x {n_samples} samples, found {:.2} rows of data",
            remaining as f64 / row_bytes as f64
        )));
    }
    let mut samples = Vec::with_capacity(n_channels);
    for label in &channels {
        let raw = cur.take(row_bytes)?;
        let row: Vec<f64> = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect();
        if let Some(index) = row.iter().position(|x| !x.is_finite()) {
            return Err(SignalError::NonFiniteSample { channel: label.clone(), index });
        }
        samples.push(row);
    }
    EegRecording::new(channels, sample_rate_hz, samples)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], SignalError> {
        if self.pos + n > self.bytes.len() {
            return Err(SignalError::MalformedHeader("truncated file".into()));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32, SignalError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

pub fn write_csv(rec: &EegRecording, path: &Path) -> Result<(), SignalError> {
    let mut w = BufWriter::new(File::create(path)?);
    write!(w, "time")?;
    for ch in rec.channels() {
        write!(w, ",{ch}")?;
    }
    writeln!(w)?;
    for t in 0..rec.n_samples() {
        write!(w, "{}", t as f64 / rec.sample_rate_hz())?;
        for row in rec.samples() {
            write!(w, ",{}", row[t])?;
        }
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes the `EEG1` binary layout. Samples are narrowed to f32.
pub fn write_binary(rec: &EegRecording, path: &Path) -> Result<(), SignalError> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&(rec.n_channels() as u32).to_le_bytes())?;
    w.write_all(&(rec.n_samples() as u32).to_le_bytes())?;
    w.write_all(&rec.sample_rate_hz().to_le_bytes())?;
    for ch in rec.channels() {
        let b = ch.as_bytes();
        w.write_all(&(b.len() as u16).to_le_bytes())?;
        w.write_all(b)?;
    }
    for row in rec.samples() {
        for &x in row {
            w.write_all(&(x as f32).to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}
