use std::collections::HashMap;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::mpsc::{sync_channel, Receiver, RecvTimeoutError, SyncSender, TrySendError};
use std::sync::{Arc, Mutex, MutexGuard};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;
use tokio::sync::broadcast;
use uuid::Uuid;

use super::envelope::{now_ms, ClientMessage, Envelope, EnvelopeKind, ENVELOPE_VERSION};
use super::journal::EventLog;
use crate::decoder::AffectState;
use crate::planner::KnowledgeBase;
use crate::session::{
    replay, run_session, Feedback, LoopConfig, OperatorInput, SessionError, SessionEvent, SessionIo, SessionReport,
    SubjectMode,
};
use crate::signal::EegWindow;

pub const DEFAULT_QUEUE_CAPACITY: usize = 256;
pub const DEFAULT_MAX_SESSIONS: usize = 16;
const BROADCAST_CAPACITY: usize = 1024;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct CreateRequest {
    #[serde(default)]
    pub config: LoopConfig,
    #[serde(default)]
    pub seed: u64,
    /// Simulated sessions pause this long before closing each round so
    /// operator input can arrive.
    #[serde(default)]
    pub pace_ms: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Idle,
    Running,
    Completed,
    Failed,
    /// Was running when the service stopped.
    Interrupted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionInfo {
    pub session_id: Uuid,
    pub status: Status,
    pub live: bool,
    pub last_seq: u64,
    pub rounds_completed: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub request: CreateRequest,
}

/// Payload of inbound `feedback` and `target_edit` messages.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct FeedbackPayload {
    #[serde(default)]
    pub ratings: Option<Feedback>,
    #[serde(default)]
    pub target_edit: Option<AffectState>,
}

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("at most {0} concurrent sessions")]
    CapacityExceeded(usize),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("unknown session {0}")]
    UnknownSession(String),
    #[error("session is not in live mode")]
    WrongMode,
    #[error("client seq {got} does not follow {last}")]
    OutOfOrderSeq { last: u64, got: u64 },
    #[error("{0}")]
    InvalidRating(String),
    #[error("session is {0:?}")]
    InvalidState(Status),
    #[error("invalid message: {0}")]
    InvalidMessage(String),
    #[error("inbound queue full")]
    QueueFull,
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl ServiceError {
    pub fn code(&self) -> &'static str {
        match self {
            ServiceError::CapacityExceeded(_) => "capacity_exceeded",
            ServiceError::InvalidConfig(_) => "invalid_config",
            ServiceError::UnknownSession(_) => "unknown_session",
            ServiceError::WrongMode => "wrong_mode",
            ServiceError::OutOfOrderSeq { .. } => "out_of_order_seq",
            ServiceError::InvalidRating(_) => "invalid_rating",
            ServiceError::InvalidState(_) => "invalid_state",
            ServiceError::InvalidMessage(_) => "invalid_message",
            ServiceError::QueueFull => "queue_full",
            ServiceError::Io(_) => "io",
        }
    }

    pub fn retryable(&self) -> bool {
        matches!(self, ServiceError::QueueFull | ServiceError::Io(_))
    }
}

struct Slot {
    id: Uuid,
    request: CreateRequest,
    status: Status,
    error: Option<String>,
    log: EventLog,
    events: Vec<Envelope>,
    tx: broadcast::Sender<Envelope>,
    frames: Option<SyncSender<EegWindow>>,
    frames_rx: Option<Receiver<EegWindow>>,
    pending: OperatorInput,
    last_client_seq: Option<u64>,
    rounds_completed: usize,
}

impl Slot {
    fn append(&mut self, kind: EnvelopeKind, payload: Value, client_seq: Option<u64>) -> Result<Envelope, ServiceError> {
        let env = Envelope {
            v: ENVELOPE_VERSION,
            session_id: self.id,
            seq: self.log.last_seq() + 1,
            kind,
            payload,
            ts: now_ms(),
            client_seq,
        };
        self.log.append(&env)?;
        self.events.push(env.clone());
        // no subscribers is fine
        let _ = self.tx.send(env.clone());
        Ok(env)
    }

    fn check_client_seq(&self, got: Option<u64>) -> Result<(), ServiceError> {
        match (self.last_client_seq, got) {
            (Some(last), Some(got)) if got <= last => Err(ServiceError::OutOfOrderSeq { last, got }),
            _ => Ok(()),
        }
    }

    fn info(&self) -> SessionInfo {
        SessionInfo {
            session_id: self.id,
            status: self.status,
            live: self.request.config.subject.is_live(),
            last_seq: self.log.last_seq(),
            rounds_completed: self.rounds_completed,
            error: self.error.clone(),
            request: self.request.clone(),
        }
    }
}

type SlotRef = Arc<Mutex<Slot>>;

fn lock(slot: &SlotRef) -> MutexGuard<'_, Slot> {
    slot.lock().unwrap_or_else(|e| e.into_inner())
}

fn event_kind(e: &SessionEvent) -> EnvelopeKind {
    match e {
        SessionEvent::PlanIssued { .. } => EnvelopeKind::PlanIssued,
        SessionEvent::ClipReady { .. } => EnvelopeKind::ClipReady,
        SessionEvent::RoundFailed(_) => EnvelopeKind::Error,
        SessionEvent::Finished(_) => EnvelopeKind::Report,
        SessionEvent::Started { .. }
        | SessionEvent::Listened { .. }
        | SessionEvent::OperatorAction { .. }
        | SessionEvent::RoundCompleted(_) => EnvelopeKind::StateUpdate,
    }
}

/// Session events carried by a persisted envelope stream, in order.
pub fn session_events(events: &[Envelope]) -> Vec<SessionEvent> {
    events
        .iter()
        .filter(|e| matches!(e.kind, EnvelopeKind::StateUpdate | EnvelopeKind::Error | EnvelopeKind::Report))
        .filter_map(|e| serde_json::from_value(e.payload.clone()).ok())
        .collect()
}

/// The session report rebuilt from its envelope log.
pub fn replay_envelopes(events: &[Envelope]) -> Option<SessionReport> {
    replay(&session_events(events))
}

fn status_payload(status: Status, error: Option<&str>) -> Value {
    let mut v = serde_json::json!({"phase": "status", "status": status});
    if let Some(e) = error {
        v["error"] = Value::from(e);
    }
    v
}

/// Status from the last status transition in the log; a session that was
/// running when the log ends is interrupted.
fn derive_status(events: &[Envelope]) -> (Status, Option<String>) {
    let last = events.iter().rev().find(|e| e.kind == EnvelopeKind::StateUpdate && e.payload["phase"] == "status");
    let Some(e) = last else { return (Status::Idle, None) };
    let error = e.payload["error"].as_str().map(str::to_string);
    match serde_json::from_value(e.payload["status"].clone()) {
        Ok(Status::Running) | Ok(Status::Interrupted) => (Status::Interrupted, None),
        Ok(s) => (s, error),
        Err(_) => (Status::Interrupted, None),
    }
}

/// Session hosting: creation, inbound messages, streaming and recovery.
///
/// Layout under `data_dir`: `sessions/<id>/request.json`,
/// `sessions/<id>/log.jsonl` and shared `clips/<sha256>.wav`.
pub struct SessionManager {
    data_dir: PathBuf,
    max_sessions: usize,
    queue_capacity: usize,
    kb: KnowledgeBase,
    sessions: Mutex<HashMap<Uuid, SlotRef>>,
}

impl SessionManager {
    /// Opens `data_dir`, recovering every persisted session.
    pub fn open(data_dir: &Path, max_sessions: usize, kb: KnowledgeBase) -> Result<Self, ServiceError> {
        fs::create_dir_all(data_dir.join("sessions"))?;
        fs::create_dir_all(data_dir.join("clips"))?;
        let mut sessions = HashMap::new();
        for entry in fs::read_dir(data_dir.join("sessions"))? {
            let dir = entry?.path();
            let Some(id) = dir.file_name().and_then(|n| n.to_str()).and_then(|n| Uuid::parse_str(n).ok()) else {
                continue;
            };
            let request: CreateRequest = match fs::read(dir.join("request.json"))
                .map_err(|e| e.to_string())
                .and_then(|b| serde_json::from_slice(&b).map_err(|e| e.to_string()))
            {
                Ok(r) => r,
                Err(e) => {
                    log::warn!("skipping session {id}: {e}");
                    continue;
                }
            };
            let (log, events) = EventLog::open(&dir.join("log.jsonl"))?;
            let (status, error) = derive_status(&events);
            let rounds_completed = session_events(&events)
                .iter()
                .filter(|e| matches!(e, SessionEvent::RoundCompleted(_)))
                .count();
            let last_client_seq = events.iter().filter_map(|e| e.client_seq).max();
            let (tx, _) = broadcast::channel(BROADCAST_CAPACITY);
            let slot = Slot {
                id,
                request,
                status,
                error,
                log,
                events,
                tx,
                frames: None,
                frames_rx: None,
                pending: OperatorInput::default(),
                last_client_seq,
                rounds_completed,
            };
            sessions.insert(id, Arc::new(Mutex::new(slot)));
        }
        Ok(Self {
            data_dir: data_dir.to_path_buf(),
            max_sessions,
            queue_capacity: DEFAULT_QUEUE_CAPACITY,
            kb,
            sessions: Mutex::new(sessions),
        })
    }

    pub fn with_queue_capacity(mut self, n: usize) -> Self {
        self.queue_capacity = n.max(1);
        self
    }

    pub fn data_dir(&self) -> &Path {
        &self.data_dir
    }

    pub fn clip_path(&self, hash: &str) -> Option<PathBuf> {
        let ok = hash.len() == 64 && hash.bytes().all(|b| b.is_ascii_digit() || (b'a'..=b'f').contains(&b));
        ok.then(|| self.data_dir.join("clips").join(format!("{hash}.wav")))
    }

    fn slot(&self, id: Uuid) -> Result<SlotRef, ServiceError> {
        let map = self.sessions.lock().unwrap_or_else(|e| e.into_inner());
        map.get(&id).cloned().ok_or_else(|| ServiceError::UnknownSession(id.to_string()))
    }

    pub fn list(&self) -> Vec<SessionInfo> {
        let map = self.sessions.lock().unwrap_or_else(|e| e.into_inner());
        let mut out: Vec<SessionInfo> = map.values().map(|s| lock(s).info()).collect();
        out.sort_by_key(|i| i.session_id);
        out
    }

    /// New session in `idle`; its request is persisted before returning.
    pub fn create(&self, request: CreateRequest) -> Result<Uuid, ServiceError> {
        request.config.validate().map_err(|e| match e {
            SessionError::InvalidConfig(m) => ServiceError::InvalidConfig(m),
            other => ServiceError::InvalidConfig(other.to_string()),
        })?;
        let mut map = self.sessions.lock().unwrap_or_else(|e| e.into_inner());
        let active = map.values().filter(|s| matches!(lock(s).status, Status::Idle | Status::Running)).count();
        if active >= self.max_sessions {
            return Err(ServiceError::CapacityExceeded(self.max_sessions));
        }
        let id = Uuid::new_v4();
        let dir = self.data_dir.join("sessions").join(id.to_string());
        fs::create_dir_all(&dir)?;
        let tmp = dir.join("request.json.tmp");
        let mut f = OpenOptions::new().write(true).create(true).truncate(true).open(&tmp)?;
        f.write_all(crate::canonical::to_string(&request).expect("request serializes").as_bytes())?;
        f.sync_all()?;
        fs::rename(&tmp, dir.join("request.json"))?;
        let (mut log, _) = EventLog::open(&dir.join("log.jsonl"))?;
        let (frames, frames_rx) = if request.config.subject.is_live() {
            let (tx, rx) = sync_channel(self.queue_capacity);
            (Some(tx), Some(rx))
        } else {
            (None, None)
        };
        let (tx, _) = broadcast::channel(BROADCAST_CAPACITY);
        let created = Envelope {
            v: ENVELOPE_VERSION,
            session_id: id,
            seq: 1,
            kind: EnvelopeKind::StateUpdate,
            payload: status_payload(Status::Idle, None),
            ts: now_ms(),
            client_seq: None,
        };
        log.append(&created)?;
        let slot = Slot {
            id,
            request,
            status: Status::Idle,
            error: None,
            log,
            events: vec![created],
            tx,
            frames,
            frames_rx,
            pending: OperatorInput::default(),
            last_client_seq: None,
            rounds_completed: 0,
        };
        map.insert(id, Arc::new(Mutex::new(slot)));
        Ok(id)
    }

    /// Moves an idle session to `running` on its own thread.
    pub fn start(&self, id: Uuid) -> Result<(), ServiceError> {
        let slot = self.slot(id)?;
        let (cfg, seed, pace, frames_rx) = {
            let mut s = lock(&slot);
            if s.status != Status::Idle {
                return Err(ServiceError::InvalidState(s.status));
            }
            s.append(EnvelopeKind::StateUpdate, status_payload(Status::Running, None), None)?;
            s.status = Status::Running;
            (s.request.config.clone(), s.request.seed, s.request.pace_ms, s.frames_rx.take())
        };
        let (frames_per_round, timeout) = match cfg.subject {
            SubjectMode::Live { frames_per_round, timeout_ms } => (frames_per_round, Duration::from_millis(timeout_ms)),
            SubjectMode::Simulated { .. } => (0, Duration::ZERO),
        };
        let mut io = ServiceIo {
            slot: slot.clone(),
            clips_dir: self.data_dir.join("clips"),
            frames: frames_rx,
            frames_per_round,
            timeout,
            pace: Duration::from_millis(pace),
        };
        let kb = self.kb.clone();
        std::thread::Builder::new().name(format!("session-{id}")).spawn(move || {
            let outcome = run_session(&cfg, kb, None, seed, &mut io);
            let mut s = lock(&slot);
            s.frames = None;
            let (status, error) = match outcome {
                Ok(_) => (Status::Completed, None),
                Err(e) => {
                    log::warn!("session {id} failed: {e}");
                    (Status::Failed, Some(e.to_string()))
                }
            };
            if let Some(e) = &error {
                let payload = serde_json::json!({"phase": "fatal", "error": e});
                if let Err(le) = s.append(EnvelopeKind::Error, payload, None) {
                    log::error!("session {id}: cannot log failure: {le}");
                }
            }
            if let Err(le) = s.append(EnvelopeKind::StateUpdate, status_payload(status, error.as_deref()), None) {
                log::error!("session {id}: cannot log status: {le}");
            }
            s.status = status;
            s.error = error;
        })?;
        Ok(())
    }

    pub fn info(&self, id: Uuid) -> Result<SessionInfo, ServiceError> {
        Ok(lock(&self.slot(id)?).info())
    }

    /// Report rebuilt from the log; partial while the session runs.
    pub fn report(&self, id: Uuid) -> Result<Option<SessionReport>, ServiceError> {
        Ok(replay_envelopes(&lock(&self.slot(id)?).events))
    }

    pub fn envelopes(&self, id: Uuid) -> Result<Vec<Envelope>, ServiceError> {
        Ok(lock(&self.slot(id)?).events.clone())
    }

    /// Backlog plus a receiver for everything appended after it.
    pub fn subscribe(&self, id: Uuid) -> Result<(Vec<Envelope>, broadcast::Receiver<Envelope>), ServiceError> {
        let slot = self.slot(id)?;
        let s = lock(&slot);
        Ok((s.events.clone(), s.tx.subscribe()))
    }

    /// Enqueues a frame for a running live session; the ack is its seq.
    pub fn ingest_frame(&self, id: Uuid, client_seq: Option<u64>, frame: EegWindow) -> Result<u64, ServiceError> {
        let slot = self.slot(id)?;
        let mut s = lock(&slot);
        if !s.request.config.subject.is_live() {
            return Err(ServiceError::WrongMode);
        }
        if s.status != Status::Running {
            return Err(ServiceError::InvalidState(s.status));
        }
        s.check_client_seq(client_seq)?;
        frame.validate().map_err(|e| ServiceError::InvalidMessage(e.to_string()))?;
        let payload = serde_json::to_value(&frame).expect("frame serializes");
        let sender = s.frames.as_ref().ok_or(ServiceError::InvalidState(s.status))?;
        match sender.try_send(frame) {
            Ok(()) => {}
            Err(TrySendError::Full(_)) => return Err(ServiceError::QueueFull),
            Err(TrySendError::Disconnected(_)) => return Err(ServiceError::InvalidState(s.status)),
        }
        let env = s.append(EnvelopeKind::EegFrame, payload, client_seq)?;
        if client_seq.is_some() {
            s.last_client_seq = client_seq;
        }
        Ok(env.seq)
    }

    /// Records ratings and an optional target edit for the current round.
    pub fn submit_feedback(
        &self,
        id: Uuid,
        client_seq: Option<u64>,
        fb: FeedbackPayload,
    ) -> Result<u64, ServiceError> {
        let slot = self.slot(id)?;
        let mut s = lock(&slot);
        if let Some(r) = &fb.ratings {
            r.validate().map_err(ServiceError::InvalidRating)?;
        } else if fb.target_edit.is_none() {
            return Err(ServiceError::InvalidRating("neither ratings nor target_edit given".into()));
        }
        if s.status != Status::Running {
            return Err(ServiceError::InvalidState(s.status));
        }
        s.check_client_seq(client_seq)?;
        let kind = if fb.ratings.is_some() { EnvelopeKind::Feedback } else { EnvelopeKind::TargetEdit };
        let env = s.append(kind, serde_json::to_value(fb).expect("feedback serializes"), client_seq)?;
        if client_seq.is_some() {
            s.last_client_seq = client_seq;
        }
        if fb.ratings.is_some() {
            s.pending.feedback = fb.ratings;
        }
        if fb.target_edit.is_some() {
            s.pending.target_edit = fb.target_edit;
        }
        Ok(env.seq)
    }

    /// Dispatches one inbound stream message.
    pub fn handle(&self, id: Uuid, msg: ClientMessage) -> Result<u64, ServiceError> {
        if msg.v != ENVELOPE_VERSION {
            return Err(ServiceError::InvalidMessage(format!("unsupported version {}", msg.v)));
        }
        let bad = |e: serde_json::Error| ServiceError::InvalidMessage(e.to_string());
        match msg.kind {
            EnvelopeKind::EegFrame => self.ingest_frame(id, msg.seq, serde_json::from_value(msg.payload).map_err(bad)?),
            EnvelopeKind::Feedback | EnvelopeKind::TargetEdit => {
                self.submit_feedback(id, msg.seq, serde_json::from_value(msg.payload).map_err(bad)?)
            }
            k => Err(ServiceError::InvalidMessage(format!("{k:?} is not accepted from clients"))),
        }
    }
}

struct ServiceIo {
    slot: SlotRef,
    clips_dir: PathBuf,
    frames: Option<Receiver<EegWindow>>,
    frames_per_round: usize,
    timeout: Duration,
    pace: Duration,
}

impl SessionIo for ServiceIo {
    fn emit(&mut self, event: &SessionEvent) -> Result<(), SessionError> {
        let payload = serde_json::to_value(event).expect("event serializes");
        let mut s = lock(&self.slot);
        s.append(event_kind(event), payload, None).map_err(|e| match e {
            ServiceError::Io(io) => SessionError::Io(io),
            other => SessionError::Io(std::io::Error::other(other.to_string())),
        })?;
        if matches!(event, SessionEvent::RoundCompleted(_)) {
            s.rounds_completed += 1;
        }
        Ok(())
    }

    fn store_clip(&mut self, hash: &str, wav: &[u8]) -> Result<String, SessionError> {
        let path = self.clips_dir.join(format!("{hash}.wav"));
        if !path.exists() {
            let tmp = self.clips_dir.join(format!(".{hash}.{}.tmp", Uuid::new_v4()));
            let mut f = OpenOptions::new().write(true).create(true).truncate(true).open(&tmp)?;
            f.write_all(wav)?;
            f.sync_all()?;
            fs::rename(&tmp, &path)?;
        }
        Ok(format!("clips/{hash}.wav"))
    }

    fn next_segment(&mut self, round: usize) -> Result<Vec<EegWindow>, SessionError> {
        let rx = self
            .frames
            .as_ref()
            .ok_or_else(|| SessionError::SubjectDisconnected("session has no EEG input".into()))?;
        let mut out = Vec::with_capacity(self.frames_per_round);
        while out.len() < self.frames_per_round {
            match rx.recv_timeout(self.timeout) {
                Ok(f) => out.push(f),
                Err(RecvTimeoutError::Timeout) => {
                    return Err(SessionError::SubjectDisconnected(format!(
                        "no EEG frame within {:?} (round {round}, {} of {} frames)",
                        self.timeout,
                        out.len(),
                        self.frames_per_round
                    )))
                }
                Err(RecvTimeoutError::Disconnected) => {
                    return Err(SessionError::SubjectDisconnected("frame queue closed".into()))
                }
            }
        }
        Ok(out)
    }

    fn operator_input(&mut self, _round: usize) -> OperatorInput {
        if !self.pace.is_zero() {
            std::thread::sleep(self.pace);
        }
        std::mem::take(&mut lock(&self.slot).pending)
    }
}
