//! HTTP and WebSocket surface of `affectloop serve`.

mod common;

use std::time::Duration;

use futures_util::{SinkExt, StreamExt};
use tokio_tungstenite::tungstenite::Message;

use common::{http, json, wait_for, Server};

const SIMULATED: &str = r#"{"config":{"max_rounds":2,"sample_rate_hz":8000,"clip_affect":"ideal"},"seed":1}"#;

fn create(addr: &str, body: &str) -> String {
    let (code, text) = http(addr, "POST", "/sessions", Some(body));
    assert_eq!(code, 201, "{text}");
    let v = json(&text);
    assert_eq!(v["status"], "idle");
    v["session_id"].as_str().unwrap().to_string()
}

#[test]
fn simulated_session_lifecycle() {
    let data = tempfile::tempdir().unwrap();
    let s = Server::start(data.path());
    let id = create(&s.addr, SIMULATED);

    let (code, body) = http(&s.addr, "GET", &format!("/sessions/{id}/report"), None);
    assert_eq!(code, 404);
    assert_eq!(json(&body)["error"]["code"], "not_started");

    let (code, _) = http(&s.addr, "POST", &format!("/sessions/{id}/start"), None);
    assert_eq!(code, 202);
    let (code, body) = http(&s.addr, "POST", &format!("/sessions/{id}/start"), None);
    assert_eq!(code, 409, "{body}");

    let info = wait_for(Duration::from_secs(60), || {
        let (_, b) = http(&s.addr, "GET", &format!("/sessions/{id}"), None);
        let v = json(&b);
        (v["status"] == "completed").then_some(v)
    })
    .expect("session completes");
    assert!(info["rounds_completed"].as_u64().unwrap() >= 1);

    let (code, body) = http(&s.addr, "GET", &format!("/sessions/{id}/report"), None);
    assert_eq!(code, 200);
    let report = json(&body);
    let hash = report["rounds"][0]["clip_ref"]["hash"].as_str().unwrap().to_string();

    let (code, wav) = http(&s.addr, "GET", &format!("/clips/{hash}.wav"), None);
    assert_eq!(code, 200);
    assert!(wav.starts_with("RIFF"));
    let (code, _) = http(&s.addr, "GET", "/clips/nothex.wav", None);
    assert_eq!(code, 404);

    let (_, list) = http(&s.addr, "GET", "/sessions", None);
    assert_eq!(json(&list).as_array().unwrap().len(), 1);
}

#[test]
fn errors_map_to_status_codes() {
    let data = tempfile::tempdir().unwrap();
    let s = Server::start(data.path());
    let (code, body) = http(&s.addr, "GET", "/sessions/00000000-0000-0000-0000-000000000000", None);
    assert_eq!(code, 404);
    assert_eq!(json(&body)["error"]["code"], "unknown_session");
    let (code, _) = http(&s.addr, "POST", "/sessions", Some(r#"{"config":{"alpha":3}}"#));
    assert_eq!(code, 400);
    let (code, _) = http(&s.addr, "POST", "/sessions", Some("not json"));
    assert_eq!(code, 400);
}

#[test]
fn stream_replies_and_guards_mode() {
    let data = tempfile::tempdir().unwrap();
    let s = Server::start(data.path());
    let id = create(&s.addr, SIMULATED);
    let rt = tokio::runtime::Runtime::new().unwrap();
    rt.block_on(async {
        let (mut ws, _) = tokio_tungstenite::connect_async(format!("ws://{}/sessions/{id}/stream", s.addr)).await.unwrap();
        let first = ws.next().await.unwrap().unwrap();
        let created = json(first.to_text().unwrap());
        assert_eq!((created["seq"].as_u64(), created["v"].as_u64()), (Some(1), Some(1)));

        let frame = r#"{"v":1,"kind":"eeg_frame","seq":1,"payload":{"start_s":0,"duration_s":1,"sample_rate_hz":128,"channels":["F3"],"samples":[[0.0]]}}"#;
        ws.send(Message::text(frame)).await.unwrap();
        let reply = json(ws.next().await.unwrap().unwrap().to_text().unwrap());
        assert_eq!(reply["ok"], false);
        assert_eq!(reply["reply_to"], 1);
        assert_eq!(reply["error"]["code"], "wrong_mode");

        ws.send(Message::text("{\"v\":1,\"kind\":\"teleport\"}")).await.unwrap();
        let reply = json(ws.next().await.unwrap().unwrap().to_text().unwrap());
        assert_eq!(reply["error"]["code"], "invalid_message");
    });
}
