//! Session hosting over HTTP and WebSocket with a crash-consistent
//! envelope log per session.

mod envelope;
mod http;
mod journal;
mod manager;

pub use envelope::{now_ms, ClientMessage, Envelope, EnvelopeKind, ErrorBody, Reply, ENVELOPE_VERSION};
pub use http::{router, serve};
pub use journal::{checksum, encode_line, EventLog};
pub use manager::{
    replay_envelopes, session_events, CreateRequest, FeedbackPayload, ServiceError, SessionInfo, SessionManager,
    Status, DEFAULT_MAX_SESSIONS, DEFAULT_QUEUE_CAPACITY,
};
