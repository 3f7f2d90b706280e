use std::sync::Arc;

use axum::body::Body;
use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use futures_util::{SinkExt, StreamExt};
use tokio::sync::broadcast::error::RecvError;
use uuid::Uuid;

use super::envelope::{ClientMessage, Envelope, ErrorBody, Reply, ENVELOPE_VERSION};
use super::manager::{CreateRequest, ServiceError, SessionManager};

type Shared = Arc<SessionManager>;

struct ApiError(ServiceError);

impl From<ServiceError> for ApiError {
    fn from(e: ServiceError) -> Self {
        ApiError(e)
    }
}

fn error_body(e: &ServiceError) -> ErrorBody {
    ErrorBody { code: e.code().to_string(), message: e.to_string(), retryable: e.retryable() }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = match &self.0 {
            ServiceError::UnknownSession(_) => StatusCode::NOT_FOUND,
            ServiceError::CapacityExceeded(_) | ServiceError::QueueFull => StatusCode::TOO_MANY_REQUESTS,
            ServiceError::InvalidState(_) | ServiceError::OutOfOrderSeq { .. } => StatusCode::CONFLICT,
            ServiceError::Io(_) => StatusCode::INTERNAL_SERVER_ERROR,
            _ => StatusCode::BAD_REQUEST,
        };
        json(status, &serde_json::json!({ "error": error_body(&self.0) }))
    }
}

fn json<T: serde::Serialize>(status: StatusCode, body: &T) -> Response {
    let text = crate::canonical::to_string(body).expect("response serializes");
    (status, [(header::CONTENT_TYPE, "application/json")], text).into_response()
}

fn parse_id(s: &str) -> Result<Uuid, ApiError> {
    Uuid::parse_str(s).map_err(|_| ApiError(ServiceError::UnknownSession(s.to_string())))
}

/// Routes:
///
/// - `POST /sessions`, `GET /sessions`
/// - `POST /sessions/{id}/start`
/// - `GET /sessions/{id}`, `GET /sessions/{id}/report`
/// - `GET /clips/{hash}.wav`
/// - `GET /sessions/{id}/stream` (WebSocket)
pub fn router(manager: Shared) -> Router {
    Router::new()
        .route("/sessions", post(create).get(list))
        .route("/sessions/{id}", get(info))
        .route("/sessions/{id}/start", post(start))
        .route("/sessions/{id}/report", get(report))
        .route("/sessions/{id}/stream", get(stream))
        .route("/clips/{file}", get(clip))
        .with_state(manager)
}

async fn create(State(m): State<Shared>, body: axum::body::Bytes) -> Result<Response, ApiError> {
    let req: CreateRequest =
        serde_json::from_slice(&body).map_err(|e| ApiError(ServiceError::InvalidConfig(e.to_string())))?;
    let id = m.create(req)?;
    let info = m.info(id)?;
    Ok(json(StatusCode::CREATED, &serde_json::json!({ "session_id": id, "status": info.status })))
}

async fn list(State(m): State<Shared>) -> Response {
    json(StatusCode::OK, &m.list())
}

async fn info(State(m): State<Shared>, Path(id): Path<String>) -> Result<Response, ApiError> {
    Ok(json(StatusCode::OK, &m.info(parse_id(&id)?)?))
}

async fn start(State(m): State<Shared>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let id = parse_id(&id)?;
    m.start(id)?;
    Ok(json(StatusCode::ACCEPTED, &m.info(id)?))
}

async fn report(State(m): State<Shared>, Path(id): Path<String>) -> Result<Response, ApiError> {
    match m.report(parse_id(&id)?)? {
        Some(r) => Ok(json(StatusCode::OK, &r)),
        None => Ok(json(
            StatusCode::NOT_FOUND,
            &serde_json::json!({"error": {"code": "not_started", "message": "session has not started", "retryable": true}}),
        )),
    }
}

async fn clip(State(m): State<Shared>, Path(file): Path<String>) -> Response {
    let Some(path) = file.strip_suffix(".wav").and_then(|h| m.clip_path(h)) else {
        return StatusCode::NOT_FOUND.into_response();
    };
    match tokio::task::spawn_blocking(move || std::fs::read(path)).await {
        Ok(Ok(bytes)) => ([(header::CONTENT_TYPE, "audio/wav")], Body::from(bytes)).into_response(),
        _ => StatusCode::NOT_FOUND.into_response(),
    }
}

async fn stream(State(m): State<Shared>, Path(id): Path<String>, ws: WebSocketUpgrade) -> Result<Response, ApiError> {
    let id = parse_id(&id)?;
    m.info(id)?;
    Ok(ws.on_upgrade(move |socket| serve_stream(m, id, socket)))
}

fn text(e: &Envelope) -> Message {
    Message::Text(e.to_canonical_json().into())
}

/// Sends the persisted backlog, then live envelopes; answers each client
/// message with a [`Reply`].
async fn serve_stream(m: Shared, id: Uuid, socket: WebSocket) {
    let (mut tx, mut rx) = socket.split();
    let Ok((backlog, mut live)) = m.subscribe(id) else { return };
    let (reply_tx, mut reply_rx) = tokio::sync::mpsc::channel::<Message>(64);

    let writer = tokio::spawn(async move {
        for e in &backlog {
            if tx.send(text(e)).await.is_err() {
                return;
            }
        }
        let mut last = backlog.last().map_or(0, |e| e.seq);
        loop {
            tokio::select! {
                r = live.recv() => match r {
                    Ok(e) if e.seq > last => {
                        last = e.seq;
                        if tx.send(text(&e)).await.is_err() { return; }
                    }
                    Ok(_) => {}
                    Err(RecvError::Lagged(n)) => log::warn!("stream {id} lagged by {n} envelopes"),
                    Err(RecvError::Closed) => return,
                },
                msg = reply_rx.recv() => match msg {
                    Some(msg) => if tx.send(msg).await.is_err() { return; },
                    None => return,
                },
            }
        }
    });

    while let Some(Ok(msg)) = rx.next().await {
        let body = match msg {
            Message::Text(t) => t.to_string(),
            Message::Close(_) => break,
            _ => continue,
        };
        let reply = match serde_json::from_str::<ClientMessage>(&body) {
            Err(e) => Reply {
                v: ENVELOPE_VERSION,
                reply_to: None,
                ok: false,
                seq: None,
                error: Some(error_body(&ServiceError::InvalidMessage(e.to_string()))),
            },
            Ok(cm) => {
                let client_seq = cm.seq;
                let m = m.clone();
                let outcome = tokio::task::spawn_blocking(move || m.handle(id, cm)).await;
                let outcome = outcome.unwrap_or_else(|e| Err(ServiceError::Io(std::io::Error::other(e.to_string()))));
                match outcome {
                    Ok(seq) => Reply { v: ENVELOPE_VERSION, reply_to: client_seq, ok: true, seq: Some(seq), error: None },
                    Err(e) => Reply {
                        v: ENVELOPE_VERSION,
                        reply_to: client_seq,
                        ok: false,
                        seq: None,
                        error: Some(error_body(&e)),
                    },
                }
            }
        };
        let msg = Message::Text(crate::canonical::to_string(&reply).expect("reply serializes").into());
        if reply_tx.send(msg).await.is_err() {
            break;
        }
    }
    drop(reply_tx);
    let _ = writer.await;
}

/// Serves on `listener` until ctrl-c.
pub async fn serve(manager: SessionManager, listener: tokio::net::TcpListener) -> std::io::Result<()> {
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(Arc::new(manager)))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
