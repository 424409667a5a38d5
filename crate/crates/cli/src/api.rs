//! HTTP and WebSocket control surface for the operator console.
//!
//! | method | path            | body                                   |
//! |--------|-----------------|----------------------------------------|
//! | GET    | `/state`        | latest stage snapshot                  |
//! | POST   | `/role`         | `{"role": "wizard"}`                   |
//! | POST   | `/finger-map`   | `{"index": 1, "middle": 2}`            |
//! | POST   | `/gesture`      | `{"kind": "grasp_rotate", "direction": "left"}` |
//! | POST   | `/sequence/run` | `{"name": "lightning"}` or `{"cues": [...]}` |
//! | GET    | `/sequences`    | built-in sequence names                |
//! | GET    | `/config`       | effective engine config                |
//! | WS     | `/ws/stage`     | snapshot, gesture and command messages |
//!
//! Rejected bodies answer 400 with `{"error", "reason"}`; a role that needs
//! a finger map while none is set answers 409.

use std::sync::mpsc::Sender;
use std::sync::Arc;

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Json, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use serde_json::{json, Value};
use theater_core::cue::{builtin, parse_cues, BUILTIN_NAMES};
use theater_core::{CueSequence, EngineConfig, FingerMap, GestureKind, Input, Role, StageSnapshot};
use tokio::sync::{broadcast, oneshot, watch};
use tower_http::cors::CorsLayer;

use crate::runtime::{Control, SubmitError};

#[derive(Clone)]
pub struct AppState {
    pub control: Sender<Control>,
    pub snapshot: watch::Receiver<StageSnapshot>,
    pub events: broadcast::Sender<String>,
    pub config: Arc<EngineConfig>,
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/state", get(get_state))
        .route("/config", get(get_config))
        .route("/role", post(post_role))
        .route("/finger-map", post(post_finger_map))
        .route("/gesture", post(post_gesture))
        .route("/sequence/run", post(post_sequence))
        .route("/sequences", get(get_sequences))
        .route("/ws/stage", get(ws_stage))
        .layer(CorsLayer::permissive())
        .with_state(state)
}

fn reject(status: StatusCode, reason: &str, error: impl std::fmt::Display) -> Response {
    (
        status,
        Json(json!({"error": error.to_string(), "reason": reason})),
    )
        .into_response()
}

fn bad_request(reason: &str, error: impl std::fmt::Display) -> Response {
    reject(StatusCode::BAD_REQUEST, reason, error)
}

fn engine_gone() -> Response {
    reject(
        StatusCode::SERVICE_UNAVAILABLE,
        "engine_stopped",
        "engine is not running",
    )
}

async fn submit(state: &AppState, input: Input) -> Result<Role, Response> {
    let (tx, rx) = oneshot::channel();
    state
        .control
        .send(Control::Submit {
            input,
            reply: Some(tx),
        })
        .map_err(|_| engine_gone())?;
    match rx.await {
        Ok(Ok(role)) => Ok(role),
        Ok(Err(SubmitError::Conflict(e))) => Err(reject(StatusCode::CONFLICT, "mode_conflict", e)),
        Ok(Err(SubmitError::Rejected(e))) => Err(bad_request("rejected", e)),
        Err(_) => Err(engine_gone()),
    }
}

/// Parses a JSON body by hand so malformed input gets the same error shape
/// as semantic rejections.
fn body(bytes: &[u8]) -> Result<Value, Response> {
    serde_json::from_slice(bytes).map_err(|e| bad_request("malformed_json", e))
}

async fn get_state(State(s): State<AppState>) -> Json<StageSnapshot> {
    Json(s.snapshot.borrow().clone())
}

async fn get_config(State(s): State<AppState>) -> Json<EngineConfig> {
    Json((*s.config).clone())
}

async fn get_sequences() -> Json<Value> {
    Json(json!({ "builtin": BUILTIN_NAMES }))
}

async fn post_role(State(s): State<AppState>, bytes: axum::body::Bytes) -> Response {
    let v = match body(&bytes) {
        Ok(v) => v,
        Err(r) => return r,
    };
    let role: Role = match v.get("role").cloned().map(serde_json::from_value) {
        Some(Ok(r)) => r,
        Some(Err(e)) => return bad_request("unknown_role", e),
        None => return bad_request("missing_field", "expected {\"role\": ...}"),
    };
    match submit(&s, Input::Role(role)).await {
        Ok(role) => Json(json!({ "role": role })).into_response(),
        Err(r) => r,
    }
}

async fn post_finger_map(State(s): State<AppState>, bytes: axum::body::Bytes) -> Response {
    let mut v = match body(&bytes) {
        Ok(v) => v,
        Err(r) => return r,
    };
    if let Some(inner) = v.get_mut("finger_map") {
        v = inner.take();
    }
    let map: FingerMap = match serde_json::from_value(v) {
        Ok(m) => m,
        Err(e) => return bad_request("invalid_finger_map", e),
    };
    match submit(&s, Input::FingerMap(map.clone())).await {
        Ok(role) => {
            let warning = (!role.needs_finger_map())
                .then(|| format!("finger map stored; it has no effect while the role is {role}"));
            Json(json!({ "finger_map": map, "role": role, "warning": warning })).into_response()
        }
        Err(r) => r,
    }
}

/// Accepts `{"kind": ..., <payload fields>}` or `{"kind": ..., "payload": {...}}`.
pub fn parse_gesture(mut v: Value) -> Result<GestureKind, String> {
    if let Some(Value::Object(payload)) = v.get_mut("payload").map(Value::take) {
        let obj = v.as_object_mut().ok_or("gesture must be an object")?;
        obj.remove("payload");
        obj.extend(payload);
    }
    serde_json::from_value(v).map_err(|e| e.to_string())
}

async fn post_gesture(State(s): State<AppState>, bytes: axum::body::Bytes) -> Response {
    let kind = match body(&bytes).map(parse_gesture) {
        Ok(Ok(k)) => k,
        Ok(Err(e)) => return bad_request("unknown_gesture", e),
        Err(r) => return r,
    };
    match submit(&s, Input::Gesture(kind)).await {
        Ok(role) => Json(json!({ "accepted": kind, "role": role })).into_response(),
        Err(r) => r,
    }
}

async fn post_sequence(State(s): State<AppState>, bytes: axum::body::Bytes) -> Response {
    let v = match body(&bytes) {
        Ok(v) => v,
        Err(r) => return r,
    };
    let name = v.get("name").and_then(Value::as_str).unwrap_or("inline");
    let seq = if let Some(cues) = v.get("cues") {
        parse_cues(cues).and_then(|c| CueSequence::new(name, c))
    } else if v.get("name").is_some() {
        builtin(name, &s.config.stage, &s.config.roles.params)
    } else {
        return bad_request("missing_field", "expected \"name\" or \"cues\"");
    };
    let seq = match seq {
        Ok(seq) => seq,
        Err(e) => return bad_request("invalid_sequence", e),
    };
    let summary = json!({ "name": seq.name(), "cues": seq.cues().len(), "duration": seq.end() });
    if s.control.send(Control::RunSequence(seq)).is_err() {
        return engine_gone();
    }
    Json(summary).into_response()
}

async fn ws_stage(State(s): State<AppState>, ws: WebSocketUpgrade) -> Response {
    ws.on_upgrade(move |socket| stream_stage(socket, s))
}

async fn stream_stage(mut socket: WebSocket, s: AppState) {
    let mut events = s.events.subscribe();
    let first = {
        let snap = s.snapshot.borrow();
        let mut v = serde_json::to_value(&*snap).expect("snapshot serializes");
        v["type"] = json!("snapshot");
        v.to_string()
    };
    if socket.send(Message::Text(first.into())).await.is_err() {
        return;
    }
    loop {
        tokio::select! {
            ev = events.recv() => match ev {
                Ok(line) => {
                    if socket.send(Message::Text(line.into())).await.is_err() {
                        return;
                    }
                }
                Err(broadcast::error::RecvError::Lagged(n)) => {
                    tracing::debug!("ws client lagged by {n} messages");
                }
                Err(broadcast::error::RecvError::Closed) => return,
            },
            msg = socket.recv() => match msg {
                Some(Ok(Message::Close(_))) | None | Some(Err(_)) => return,
                Some(Ok(_)) => {}
            },
        }
    }
}
