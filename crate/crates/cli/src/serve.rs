//! HTTP front end: `POST /edits`, `POST /query`, `GET /health`.
//!
//! Request bodies use the same names as the command-line flags. Edits are
//! applied one at a time; each query runs against the memory snapshot
//! taken when it arrives, with at most `workers` queries in flight.

use std::io::Write;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use factsteer::decoding::DecodeMode;
use factsteer::memory::NewFact;
use factsteer::{Error, Result};
use serde_json::{json, Map, Value};
use tokio::sync::Semaphore;

use crate::engine::{AskOptions, Engine};

#[derive(Clone)]
struct AppState {
    engine: Arc<Engine>,
    slots: Arc<Semaphore>,
}

struct ApiError {
    status: StatusCode,
    body: Value,
}

impl ApiError {
    fn field(field: &str, message: impl Into<String>) -> Self {
        ApiError {
            status: StatusCode::BAD_REQUEST,
            body: json!({ "error": "bad_request", "field": field, "message": message.into() }),
        }
    }

    fn body(message: impl Into<String>) -> Self {
        ApiError {
            status: StatusCode::BAD_REQUEST,
            body: json!({ "error": "bad_request", "message": message.into() }),
        }
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let status = match e.kind() {
            "validation" | "config" | "parse" => StatusCode::BAD_REQUEST,
            "backend" | "capability" => StatusCode::BAD_GATEWAY,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError {
            status,
            body: json!({ "error": e.kind(), "message": e.to_string() }),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

fn object(body: &Bytes) -> Result<Map<String, Value>, ApiError> {
    match serde_json::from_slice(body) {
        Ok(Value::Object(map)) => Ok(map),
        Ok(_) => Err(ApiError::body("body must be a JSON object")),
        Err(e) => Err(ApiError::body(format!("body is not valid JSON: {e}"))),
    }
}

fn text(map: &Map<String, Value>, name: &str, required: bool) -> Result<Option<String>, ApiError> {
    match map.get(name) {
        None | Some(Value::Null) if required => Err(ApiError::field(name, format!("missing string field `{name}`"))),
        None | Some(Value::Null) => Ok(None),
        Some(Value::String(s)) => Ok(Some(s.clone())),
        Some(_) => Err(ApiError::field(name, format!("field `{name}` must be a string"))),
    }
}

fn number(map: &Map<String, Value>, name: &str) -> Result<Option<f64>, ApiError> {
    match map.get(name) {
        None | Some(Value::Null) => Ok(None),
        Some(v) => v
            .as_f64()
            .map(Some)
            .ok_or_else(|| ApiError::field(name, format!("field `{name}` must be a number"))),
    }
}

async fn health() -> Json<Value> {
    Json(json!({ "status": "ok", "version": env!("CARGO_PKG_VERSION") }))
}

async fn edits(State(state): State<AppState>, body: Bytes) -> Result<Json<Value>, ApiError> {
    let map = object(&body)?;
    let mut fact = NewFact::new(
        &text(&map, "subject", true)?.unwrap_or_default(),
        &text(&map, "relation", true)?.unwrap_or_default(),
        text(&map, "old", false)?.as_deref(),
        &text(&map, "new", true)?.unwrap_or_default(),
    );
    fact.surface_text = text(&map, "surface", false)?;
    let engine = state.engine.clone();
    let stored = tokio::task::spawn_blocking(move || engine.edit(vec![fact]))
        .await
        .map_err(|e| ApiError::body(format!("edit task failed: {e}")))??;
    let fact = &stored[0];
    Ok(Json(json!({ "fact_id": fact.fact_id, "seq": fact.seq })))
}

async fn query(State(state): State<AppState>, body: Bytes) -> Result<Json<Value>, ApiError> {
    let map = object(&body)?;
    let query = text(&map, "query", true)?.unwrap_or_default();
    let mode = match text(&map, "mode", false)? {
        Some(m) => Some(
            m.parse::<DecodeMode>()
                .map_err(|e| ApiError::field("mode", e.to_string()))?,
        ),
        None => None,
    };
    let top_k = match number(&map, "top_k")? {
        Some(k) if k >= 1.0 && k.fract() == 0.0 => Some(k as usize),
        Some(_) => return Err(ApiError::field("top_k", "field `top_k` must be a positive integer")),
        None => None,
    };
    let want_trace = match map.get("trace") {
        None | Some(Value::Null) => false,
        Some(Value::Bool(b)) => *b,
        Some(_) => return Err(ApiError::field("trace", "field `trace` must be a boolean")),
    };
    let alpha = match number(&map, "alpha")? {
        Some(a) if !(a.is_finite() && a >= 0.0) => {
            return Err(ApiError::field("alpha", "field `alpha` must be a finite number >= 0"))
        }
        other => other,
    };
    let options = AskOptions { alpha, mode, top_k };
    let _permit = state.slots.acquire().await.expect("semaphore is never closed");
    let engine = state.engine.clone();
    let (answer, trace) = tokio::task::spawn_blocking(move || engine.ask(&query, &options))
        .await
        .map_err(|e| ApiError::body(format!("query task failed: {e}")))??;
    let mut body = json!({ "answer": answer, "fallback_used": trace.fallback_used });
    if want_trace {
        body["trace"] = serde_json::to_value(&trace).expect("trace serializes");
    }
    Ok(Json(body))
}

pub fn router(engine: Arc<Engine>) -> Router {
    let slots = Arc::new(Semaphore::new(engine.config().workers));
    Router::new()
        .route("/health", get(health))
        .route("/edits", post(edits))
        .route("/query", post(query))
        .with_state(AppState { engine, slots })
}

/// Bind `addr`, print the bound address as `listening on http://...`, and
/// serve until the process is stopped.
pub fn serve_blocking(engine: Arc<Engine>, addr: &str, out: &mut dyn Write) -> Result<()> {
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| Error::Config(format!("cannot start runtime: {e}")))?;
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind(addr)
            .await
            .map_err(|e| Error::Config(format!("cannot bind {addr}: {e}")))?;
        let local = listener
            .local_addr()
            .map_err(|e| Error::Config(format!("cannot read bound address: {e}")))?;
        writeln!(out, "listening on http://{local}")
            .and_then(|()| out.flush())
            .ok();
        axum::serve(listener, router(engine))
            .await
            .map_err(|e| Error::Config(format!("server stopped: {e}")))
    })
}
