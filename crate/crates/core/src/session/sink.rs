use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{ClipRef, Feedback, LoopConfig, RoundFailure, RoundRecord, SessionError, SessionReport};
use crate::decoder::AffectState;
use crate::planner::InterventionPlan;
use crate::signal::EegWindow;

/// Everything a session reports while it runs, in order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "phase", rename_all = "snake_case")]
pub enum SessionEvent {
    Started { initial_state: AffectState, config: LoopConfig },
    PlanIssued { round: usize, plan: InterventionPlan },
    ClipReady { round: usize, clip: ClipRef },
    Listened { round: usize, post_state: AffectState },
    OperatorAction { round: usize, target: AffectState },
    RoundCompleted(Box<RoundRecord>),
    RoundFailed(RoundFailure),
    Finished(Box<SessionReport>),
}

/// Operator input collected during a round.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct OperatorInput {
    pub feedback: Option<Feedback>,
    pub target_edit: Option<AffectState>,
}

/// Side effects of a running session.
pub trait SessionIo {
    fn emit(&mut self, _event: &SessionEvent) -> Result<(), SessionError> {
        Ok(())
    }

    /// Persists a clip and returns the path recorded in its [`ClipRef`].
    fn store_clip(&mut self, hash: &str, wav: &[u8]) -> Result<String, SessionError>;

    /// Live mode: the EEG frames heard after round `round` (0 = baseline).
    fn next_segment(&mut self, round: usize) -> Result<Vec<EegWindow>, SessionError> {
        Err(SessionError::SubjectDisconnected(format!("no EEG source for round {round}")))
    }

    /// Feedback and target edits received since the last call.
    fn operator_input(&mut self, _round: usize) -> OperatorInput {
        OperatorInput::default()
    }
}

/// In-memory sink with scripted live segments and operator input.
#[derive(Debug, Default)]
pub struct MemorySink {
    pub events: Vec<SessionEvent>,
    pub clips: BTreeMap<String, Vec<u8>>,
    /// Consumed front to back.
    pub segments: Vec<Vec<EegWindow>>,
    /// `(round, input)` pairs handed out at the end of that round.
    pub inputs: Vec<(usize, OperatorInput)>,
}

impl SessionIo for MemorySink {
    fn emit(&mut self, event: &SessionEvent) -> Result<(), SessionError> {
        self.events.push(event.clone());
        Ok(())
    }

    fn store_clip(&mut self, hash: &str, wav: &[u8]) -> Result<String, SessionError> {
        self.clips.insert(hash.to_string(), wav.to_vec());
        Ok(format!("clips/{hash}.wav"))
    }

    fn next_segment(&mut self, round: usize) -> Result<Vec<EegWindow>, SessionError> {
        if self.segments.is_empty() {
            return Err(SessionError::SubjectDisconnected(format!("no segment for round {round}")));
        }
        Ok(self.segments.remove(0))
    }

    fn operator_input(&mut self, round: usize) -> OperatorInput {
        self.inputs.iter().find(|(r, _)| *r == round).map(|(_, i)| *i).unwrap_or_default()
    }
}

#[derive(Serialize)]
#[serde(rename_all = "snake_case")]
enum LogLine<'a> {
    Round(&'a RoundRecord),
    Failure(&'a RoundFailure),
    OperatorAction { round: usize, target: AffectState },
}

/// Writes a session to a directory:
///
/// - `rounds.jsonl`: one canonical JSON line per round, failure or operator action
/// - `clips/<sha256>.wav`
/// - `report.json` and `report.md` when the session finishes
pub struct DirSink {
    dir: PathBuf,
    rounds: File,
}

impl DirSink {
    /// Creates `dir` if needed and truncates any previous round log.
    pub fn create(dir: &Path) -> Result<Self, SessionError> {
        fs::create_dir_all(dir.join("clips"))?;
        let rounds = File::create(dir.join("rounds.jsonl"))?;
        Ok(Self { dir: dir.to_path_buf(), rounds })
    }

    fn line(&mut self, l: &LogLine) -> Result<(), SessionError> {
        let text = crate::canonical::to_string(l).expect("log line serializes");
        writeln!(self.rounds, "{text}")?;
        self.rounds.flush()?;
        Ok(())
    }
}

impl SessionIo for DirSink {
    fn emit(&mut self, event: &SessionEvent) -> Result<(), SessionError> {
        match event {
            SessionEvent::RoundCompleted(r) => self.line(&LogLine::Round(r)),
            SessionEvent::RoundFailed(f) => self.line(&LogLine::Failure(f)),
            SessionEvent::OperatorAction { round, target } => {
                self.line(&LogLine::OperatorAction { round: *round, target: *target })
            }
            SessionEvent::Finished(report) => {
                fs::write(self.dir.join("report.json"), report.to_canonical_json() + "\n")?;
                fs::write(self.dir.join("report.md"), report.to_markdown())?;
                Ok(())
            }
            _ => Ok(()),
        }
    }

    fn store_clip(&mut self, hash: &str, wav: &[u8]) -> Result<String, SessionError> {
        let rel = format!("clips/{hash}.wav");
        let path = self.dir.join(&rel);
        if !path.exists() {
            let tmp = self.dir.join(format!("clips/.{hash}.tmp"));
            let mut f = OpenOptions::new().write(true).create(true).truncate(true).open(&tmp)?;
            f.write_all(wav)?;
            f.sync_all()?;
            fs::rename(&tmp, &path)?;
        }
        Ok(rel)
    }
}
