//! Append-only envelope log. Each line is `<16 hex> <json>\n` where the hex
//! is the first 8 bytes of SHA-256 over the JSON text. A line is durable
//! once `append` returns.

use std::fs::{File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use super::envelope::Envelope;

pub fn checksum(json: &str) -> String {
    hex::encode(&Sha256::digest(json.as_bytes())[..8])
}

pub fn encode_line(env: &Envelope) -> String {
    let json = env.to_canonical_json();
    format!("{} {json}\n", checksum(&json))
}

fn decode_line(line: &str) -> Option<Envelope> {
    let (sum, json) = line.split_once(' ')?;
    if sum.len() != 16 || checksum(json) != sum {
        return None;
    }
    serde_json::from_str(json).ok()
}

pub struct EventLog {
    path: PathBuf,
    file: File,
    last_seq: u64,
}

impl EventLog {
    /// Opens or creates the log, keeping the longest valid prefix: complete
    /// lines with a matching checksum and consecutive `seq` from 1. A torn
    /// or corrupt tail is truncated away.
    pub fn open(path: &Path) -> io::Result<(Self, Vec<Envelope>)> {
        let bytes = match std::fs::read(path) {
            Ok(b) => b,
            Err(e) if e.kind() == io::ErrorKind::NotFound => Vec::new(),
            Err(e) => return Err(e),
        };
        let mut good = 0usize;
        let mut events = Vec::new();
        let mut pos = 0usize;
        while let Some(nl) = bytes[pos..].iter().position(|&b| b == b'\n') {
            let line = &bytes[pos..pos + nl];
            let env = std::str::from_utf8(line).ok().and_then(decode_line);
            match env {
                Some(e) if e.seq == events.len() as u64 + 1 => events.push(e),
                _ => break,
            }
            pos += nl + 1;
            good = pos;
        }
        if good < bytes.len() {
            log::warn!("{}: dropping {} bytes of torn or corrupt log tail", path.display(), bytes.len() - good);
        }
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        file.set_len(good as u64)?;
        file.sync_all()?;
        let last_seq = events.len() as u64;
        Ok((Self { path: path.to_path_buf(), file, last_seq }, events))
    }

    pub fn last_seq(&self) -> u64 {
        self.last_seq
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Writes and syncs one envelope; its `seq` must be `last_seq + 1`.
    pub fn append(&mut self, env: &Envelope) -> io::Result<()> {
        if env.seq != self.last_seq + 1 {
            return Err(io::Error::new(
                io::ErrorKind::InvalidInput,
                format!("seq {} after {}", env.seq, self.last_seq),
            ));
        }
        self.file.write_all(encode_line(env).as_bytes())?;
        self.file.sync_data()?;
        self.last_seq = env.seq;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::service::envelope::EnvelopeKind;
    use uuid::Uuid;

    fn env(seq: u64) -> Envelope {
        Envelope {
            v: 1,
            session_id: Uuid::nil(),
            seq,
            kind: EnvelopeKind::StateUpdate,
            payload: serde_json::json!({"n": seq}),
            ts: 0,
            client_seq: None,
        }
    }

    #[test]
    fn roundtrip_and_reopen() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("log.jsonl");
        let (mut log, ev) = EventLog::open(&p).unwrap();
        assert!(ev.is_empty());
        for s in 1..=3 {
            log.append(&env(s)).unwrap();
        }
        assert!(log.append(&env(7)).is_err());
        drop(log);
        let (log, ev) = EventLog::open(&p).unwrap();
        assert_eq!(ev, (1..=3).map(env).collect::<Vec<_>>());
        assert_eq!(log.last_seq(), 3);
    }

    #[test]
    fn torn_tail_is_truncated() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("log.jsonl");
        let (mut log, _) = EventLog::open(&p).unwrap();
        log.append(&env(1)).unwrap();
        log.append(&env(2)).unwrap();
        drop(log);
        let full = std::fs::read(&p).unwrap();
        let mut torn = full.clone();
        torn.extend_from_slice(&encode_line(&env(3)).as_bytes()[..20]);
        std::fs::write(&p, &torn).unwrap();
        let (mut log, ev) = EventLog::open(&p).unwrap();
        assert_eq!(ev.len(), 2);
        assert_eq!(std::fs::read(&p).unwrap(), full);
        log.append(&env(3)).unwrap();
        assert_eq!(EventLog::open(&p).unwrap().1.len(), 3);
    }

    #[test]
    fn bad_checksum_ends_the_log() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("log.jsonl");
        let mut text = encode_line(&env(1));
        text.push_str(&encode_line(&env(2)).replacen("\"n\":2", "\"n\":9", 1));
        text.push_str(&encode_line(&env(3)));
        std::fs::write(&p, text).unwrap();
        assert_eq!(EventLog::open(&p).unwrap().1, vec![env(1)]);
    }
}
