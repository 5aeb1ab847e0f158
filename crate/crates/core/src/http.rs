//! JSON REST facade over a [`SessionStore`].
//!
//! | method | path | |
//! |---|---|---|
//! | POST | `/programs` | DPCL source in the body |
//! | GET | `/programs/{id}` | pretty-printed source |
//! | POST | `/sessions` | `{"program_id": ...}` |
//! | GET | `/sessions/{id}` | metadata and fork lineage |
//! | POST | `/sessions/{id}/steps` | one scenario step |
//! | GET | `/sessions/{id}/state` | |
//! | GET | `/sessions/{id}/positions` | `?kind=&violated=&holder=&action=` |
//! | GET | `/sessions/{id}/enabled` | `?actor=` |
//! | GET | `/sessions/{id}/trace` | |
//! | POST | `/sessions/{id}/fork` | |
//! | POST | `/rewrite` | `{"program_id": ..., "transform": ...}` |
//!
//! Errors are `{"error": {"code": ..., "message": ...}}`.

use std::net::SocketAddr;
use std::sync::Arc;

use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::{json, Value as JsonValue};
use tower_http::cors::CorsLayer;

use crate::interpreter::{PositionFilter, Step};
use crate::model::{pretty_print, PositionKind};
use crate::rewriter::{Registry, RewriteError};
use crate::session::{SessionStore, StoreError};

pub const DEFAULT_PORT: u16 = 8479;

type Shared = Arc<SessionStore>;

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: String,
    message: String,
    extra: Option<(&'static str, JsonValue)>,
}

impl ApiError {
    fn new(status: StatusCode, code: &str, message: impl Into<String>) -> ApiError {
        ApiError {
            status,
            code: code.to_string(),
            message: message.into(),
            extra: None,
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let mut body = json!({ "error": { "code": self.code, "message": self.message } });
        if let Some((k, v)) = self.extra {
            body[k] = v;
        }
        (self.status, Json(body)).into_response()
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> ApiError {
        let status = match &e {
            StoreError::UnknownSession(_) | StoreError::UnknownProgram(_) => StatusCode::NOT_FOUND,
            StoreError::Engine(_) => StatusCode::CONFLICT,
            StoreError::Program(_) => StatusCode::UNPROCESSABLE_ENTITY,
            StoreError::VersionMismatch { .. } | StoreError::Corrupt(_) | StoreError::Io(_) => {
                StatusCode::INTERNAL_SERVER_ERROR
            }
        };
        let mut err = ApiError::new(status, e.code(), e.to_string());
        if let StoreError::Program(d) = &e {
            err.message = "program has errors".into();
            err.extra = Some(("diagnostics", serde_json::to_value(d).unwrap()));
        }
        err
    }
}

impl From<RewriteError> for ApiError {
    fn from(e: RewriteError) -> ApiError {
        ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, e.code(), e.to_string())
    }
}

type ApiResult = Result<Response, ApiError>;

fn ok(status: StatusCode, body: JsonValue) -> ApiResult {
    Ok((status, Json(body)).into_response())
}

fn parse_json<T: for<'de> Deserialize<'de>>(body: &str) -> Result<T, ApiError> {
    serde_json::from_str(body).map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "invalid-request", e.to_string()))
}

pub fn router(store: Shared) -> Router {
    Router::new()
        .route("/programs", post(create_program))
        .route("/programs/{id}", get(get_program))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/steps", post(post_step))
        .route("/sessions/{id}/state", get(get_state))
        .route("/sessions/{id}/positions", get(get_positions))
        .route("/sessions/{id}/enabled", get(get_enabled))
        .route("/sessions/{id}/trace", get(get_trace))
        .route("/sessions/{id}/fork", post(post_fork))
        .route("/rewrite", post(post_rewrite))
        .layer(CorsLayer::permissive())
        .with_state(store)
}

/// Serves until the process is stopped.
pub async fn serve(addr: SocketAddr, store: Shared) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(store)).await
}

/// The body is DPCL source, or JSON `{"source": ..., "name": ...}`.
async fn create_program(State(store): State<Shared>, body: String) -> ApiResult {
    #[derive(Deserialize)]
    struct Wrapped {
        source: String,
        name: Option<String>,
    }
    let (name, source) = match serde_json::from_str::<Wrapped>(&body) {
        Ok(w) => (w.name.unwrap_or_else(|| "program.dpcl".into()), w.source),
        Err(_) => ("program.dpcl".to_string(), body),
    };
    let (id, warnings) = store.add_program(&name, &source)?;
    ok(
        StatusCode::CREATED,
        json!({ "program_id": id, "diagnostics": warnings }),
    )
}

async fn get_program(State(store): State<Shared>, Path(id): Path<String>) -> ApiResult {
    let program = store.program(&id)?;
    ok(
        StatusCode::OK,
        json!({ "program_id": id, "source": pretty_print(&program) }),
    )
}

async fn create_session(State(store): State<Shared>, body: String) -> ApiResult {
    #[derive(Deserialize)]
    struct Req {
        program_id: String,
    }
    let req: Req = parse_json(&body)?;
    let id = store.create_session(&req.program_id)?;
    let state = store.state(&id)?;
    ok(StatusCode::CREATED, json!({ "session_id": id, "state": state }))
}

async fn get_session(State(store): State<Shared>, Path(id): Path<String>) -> ApiResult {
    let lineage = store.lineage(&id)?;
    let body = store.with_session(&id, |s| {
        json!({
            "session_id": s.id,
            "parent": s.parent,
            "lineage": lineage,
            "created_at": s.created_at,
            "last_step_at": s.last_step_at,
            "source": pretty_print(s.program()),
        })
    })?;
    ok(StatusCode::OK, body)
}

async fn post_step(State(store): State<Shared>, Path(id): Path<String>, body: String) -> ApiResult {
    // Unknown sessions are reported before malformed bodies.
    store.with_session(&id, |_| ())?;
    let step: Step = parse_json(&body)?;
    let (delta, state) = store.step(&id, &step)?;
    let disabled = delta.disabled;
    ok(
        StatusCode::OK,
        json!({ "delta": delta, "state": state, "disabled": disabled }),
    )
}

async fn get_state(State(store): State<Shared>, Path(id): Path<String>) -> ApiResult {
    let state = store.state(&id)?;
    ok(StatusCode::OK, serde_json::to_value(state).unwrap())
}

#[derive(Deserialize)]
struct PositionsQuery {
    kind: Option<String>,
    violated: Option<String>,
    holder: Option<String>,
    action: Option<String>,
}

fn non_empty(s: Option<String>) -> Option<String> {
    s.filter(|s| !s.is_empty())
}

async fn get_positions(
    State(store): State<Shared>,
    Path(id): Path<String>,
    Query(q): Query<PositionsQuery>,
) -> ApiResult {
    let bad = |m: String| ApiError::new(StatusCode::BAD_REQUEST, "invalid-query", m);
    let kind = match non_empty(q.kind) {
        Some(k) => Some(k.parse::<PositionKind>().map_err(bad)?),
        None => None,
    };
    let violated = match non_empty(q.violated).as_deref() {
        None => None,
        Some("true") => Some(true),
        Some("false") => Some(false),
        Some(other) => return Err(bad(format!("`violated` must be true or false, not `{other}`"))),
    };
    let filter = PositionFilter {
        kind,
        violated,
        holder: non_empty(q.holder),
        action: non_empty(q.action),
    };
    let positions = store.with_session(&id, |s| {
        serde_json::to_value(s.engine.query_positions(&s.state, &filter)).unwrap()
    })?;
    ok(StatusCode::OK, positions)
}

#[derive(Deserialize)]
struct EnabledQuery {
    actor: Option<String>,
}

async fn get_enabled(State(store): State<Shared>, Path(id): Path<String>, Query(q): Query<EnabledQuery>) -> ApiResult {
    let actor = non_empty(q.actor)
        .ok_or_else(|| ApiError::new(StatusCode::BAD_REQUEST, "invalid-query", "missing `actor` parameter"))?;
    let result = store.with_session(&id, |s| s.engine.enabled_actions(&s.state, &actor))?;
    let actions = result.map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, e.code(), e.to_string()))?;
    let body: Vec<JsonValue> = actions
        .iter()
        .map(|a| {
            let mut v = serde_json::to_value(a).unwrap();
            v["template"] = JsonValue::String(a.to_string());
            v
        })
        .collect();
    ok(StatusCode::OK, JsonValue::Array(body))
}

async fn get_trace(State(store): State<Shared>, Path(id): Path<String>) -> ApiResult {
    let trace = store.trace(&id)?;
    ok(StatusCode::OK, serde_json::to_value(trace).unwrap())
}

async fn post_fork(State(store): State<Shared>, Path(id): Path<String>) -> ApiResult {
    let child = store.fork(&id)?;
    let state = store.state(&child)?;
    ok(
        StatusCode::CREATED,
        json!({ "session_id": child, "parent": id, "state": state }),
    )
}

async fn post_rewrite(State(store): State<Shared>, body: String) -> ApiResult {
    #[derive(Deserialize)]
    struct Req {
        program_id: String,
        transform: String,
    }
    let req: Req = parse_json(&body)?;
    let program = store.program(&req.program_id)?;
    let registry = Registry::default();
    let t = registry.get(&req.transform)?;
    let (rewritten, sites) = t.apply_all(&program)?;
    if sites.is_empty() {
        return Err(ApiError::new(
            StatusCode::UNPROCESSABLE_ENTITY,
            "not-applicable",
            format!("`{}` applies nowhere in program `{}`", req.transform, req.program_id),
        ));
    }
    let source = pretty_print(&rewritten);
    let id = store.add_program_ast(rewritten)?;
    let sites: Vec<String> = sites.iter().map(|s| s.to_string()).collect();
    ok(
        StatusCode::CREATED,
        json!({ "program_id": id, "source": source, "sites": sites }),
    )
}
