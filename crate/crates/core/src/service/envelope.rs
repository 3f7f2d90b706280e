use serde::{Deserialize, Serialize};
use serde_json::Value;
use uuid::Uuid;

pub const ENVELOPE_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvelopeKind {
    EegFrame,
    StateUpdate,
    PlanIssued,
    ClipReady,
    Feedback,
    TargetEdit,
    Report,
    Error,
}

/// One persisted protocol message. `seq` is assigned by the service and is
/// gapless per session; `client_seq` echoes the sender's counter for
/// inbound messages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub v: u32,
    pub session_id: Uuid,
    pub seq: u64,
    pub kind: EnvelopeKind,
    pub payload: Value,
    /// Milliseconds since the Unix epoch.
    pub ts: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub client_seq: Option<u64>,
}

impl Envelope {
    pub fn to_canonical_json(&self) -> String {
        crate::canonical::to_string(self).expect("envelope serializes")
    }
}

/// A message sent by a client over the stream. Only `eeg_frame`,
/// `feedback` and `target_edit` are accepted inbound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientMessage {
    pub v: u32,
    pub kind: EnvelopeKind,
    /// The client's own counter; must increase.
    #[serde(default)]
    pub seq: Option<u64>,
    pub payload: Value,
}

/// Direct answer to one [`ClientMessage`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reply {
    pub v: u32,
    pub reply_to: Option<u64>,
    pub ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seq: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<ErrorBody>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
    pub retryable: bool,
}

pub fn now_ms() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map_or(0, |d| d.as_millis() as u64)
}
