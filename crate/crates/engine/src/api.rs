//! HTTP JSON interface under `/api/v1/`.

use std::collections::HashMap;

use axum::body::Bytes;
use axum::extract::{Path, Query, Request, State};
use axum::http::{header, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::{DateTime, Utc};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sentinel_core::checkcore::CheckStatus;
use sentinel_core::objconf::ResolvedConfig;
use sentinel_core::passive::PassiveResultLine;
use sentinel_core::statemachine::{HostStatus, MonitorState, StateValue};
use sentinel_core::statestore::StatusSnapshot;
use sentinel_core::{ObjectRef, Timestamp};

use crate::runtime::{Command, EngineClient};
use crate::state::CommandError;

/// An error response: status code plus `{"error": message}`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ApiError {
    pub status: StatusCode,
    pub message: String,
}

impl ApiError {
    pub fn new(status: StatusCode, message: impl Into<String>) -> Self {
        ApiError {
            status,
            message: message.into(),
        }
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, message)
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(ErrorBody { error: self.message })).into_response()
    }
}

impl From<CommandError> for ApiError {
    fn from(e: CommandError) -> Self {
        let status = match &e {
            CommandError::NotFound(_) => StatusCode::NOT_FOUND,
            CommandError::Conflict(_) => StatusCode::CONFLICT,
            CommandError::Invalid(_) => StatusCode::BAD_REQUEST,
            CommandError::Unavailable(_) => StatusCode::SERVICE_UNAVAILABLE,
        };
        ApiError::new(status, e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AckView {
    pub who: String,
    pub comment: String,
    pub at: Timestamp,
}

/// State of one object as shown to operators.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObjectSummary {
    pub host: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub service: Option<String>,
    pub status: String,
    pub hard_status: String,
    pub state_type: String,
    pub attempt: u32,
    pub max_check_attempts: u32,
    pub last_output: String,
    pub acknowledged: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub acknowledgement: Option<AckView>,
    pub in_downtime: bool,
    pub last_check: Option<Timestamp>,
    pub last_state_change: Option<Timestamp>,
    pub last_hard_change: Option<Timestamp>,
    pub last_notification: Option<Timestamp>,
    pub active_checks_enabled: bool,
    pub passive_checks_enabled: bool,
}

impl ObjectSummary {
    fn build<S: StateValue>(
        host: &str,
        service: Option<&str>,
        st: &MonitorState<S>,
        max_check_attempts: u32,
        active: bool,
        passive: bool,
        now: Timestamp,
    ) -> Self {
        ObjectSummary {
            host: host.to_string(),
            service: service.map(str::to_string),
            status: st.current_status.to_string(),
            hard_status: st.last_hard_status.to_string(),
            state_type: st.state_type.name().to_string(),
            attempt: st.attempt,
            max_check_attempts,
            last_output: st.last_output.clone(),
            acknowledged: st.acknowledged(),
            acknowledgement: st.acknowledgement.as_ref().map(|a| AckView {
                who: a.who.clone(),
                comment: a.comment.clone(),
                at: a.at,
            }),
            in_downtime: st.in_downtime(now),
            last_check: st.last_check,
            last_state_change: st.last_state_change,
            last_hard_change: st.last_hard_change,
            last_notification: st.last_notification,
            active_checks_enabled: active,
            passive_checks_enabled: passive,
        }
    }

    /// Hard status non-OK, or a host that is not UP right now.
    pub fn is_problem(&self) -> bool {
        let ok = if self.service.is_some() { "OK" } else { "UP" };
        self.hard_status != ok || (self.service.is_none() && self.status != ok)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct HostCounts {
    pub total: usize,
    pub up: usize,
    pub down: usize,
    pub unreachable: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ServiceCounts {
    pub total: usize,
    pub ok: usize,
    pub warning: usize,
    pub critical: usize,
    pub unknown: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub hosts: HostCounts,
    pub services: ServiceCounts,
}

impl Counts {
    fn add(&mut self, o: &ObjectSummary) {
        if o.service.is_some() {
            let s = &mut self.services;
            s.total += 1;
            match o.status.as_str() {
                "OK" => s.ok += 1,
                "WARNING" => s.warning += 1,
                "CRITICAL" => s.critical += 1,
                _ => s.unknown += 1,
            }
        } else {
            let h = &mut self.hosts;
            h.total += 1;
            match o.status.as_str() {
                "UP" => h.up += 1,
                "DOWN" => h.down += 1,
                _ => h.unreachable += 1,
            }
        }
    }
}

/// `GET /api/v1/status` response. `counts` aggregate every object that
/// passed the filters; `objects` is the requested page of them.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatusDocument {
    pub generated_at: Timestamp,
    pub counts: Counts,
    pub total_objects: usize,
    pub objects: Vec<ObjectSummary>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct StatusFilter {
    pub statuses: Option<Vec<String>>,
    pub hostgroup: Option<String>,
    pub problems_only: bool,
    pub limit: Option<usize>,
    pub offset: usize,
}

fn flag(v: &str) -> Result<bool, ApiError> {
    match v.to_ascii_lowercase().as_str() {
        "1" | "true" | "yes" => Ok(true),
        "0" | "false" | "no" | "" => Ok(false),
        _ => Err(ApiError::bad_request(format!("invalid boolean '{v}'"))),
    }
}

impl StatusFilter {
    /// Reads `status`, `hostgroup`, `problems` (alias `problem_only`),
    /// `limit` and `offset`.
    pub fn from_query(q: &HashMap<String, String>) -> Result<Self, ApiError> {
        let mut f = StatusFilter::default();
        for (k, v) in q {
            match k.as_str() {
                "status" => {
                    let mut list = Vec::new();
                    for s in v.split(',').map(str::trim).filter(|s| !s.is_empty()) {
                        let s = s.to_ascii_uppercase();
                        let known = s.parse::<CheckStatus>().is_ok() || s.parse::<HostStatus>().is_ok();
                        if !known {
                            return Err(ApiError::bad_request(format!("unknown status '{s}'")));
                        }
                        list.push(s);
                    }
                    f.statuses = Some(list);
                }
                "hostgroup" => f.hostgroup = Some(v.clone()),
                "problems" | "problem_only" | "problems_only" => f.problems_only = flag(v)?,
                "limit" => {
                    f.limit = Some(v.parse().map_err(|_| ApiError::bad_request(format!("invalid limit '{v}'")))?)
                }
                "offset" => f.offset = v.parse().map_err(|_| ApiError::bad_request(format!("invalid offset '{v}'")))?,
                other => return Err(ApiError::bad_request(format!("unknown parameter '{other}'"))),
            }
        }
        Ok(f)
    }
}

fn host_summary(config: &ResolvedConfig, snap: &StatusSnapshot, host: &str, now: Timestamp) -> Option<ObjectSummary> {
    let def = config.hosts.get(host)?;
    let st = snap.tables.hosts.get(host)?;
    Some(ObjectSummary::build(
        host,
        None,
        st,
        def.max_check_attempts,
        def.check_command.is_some() && def.active_checks_enabled,
        def.passive_checks_enabled,
        now,
    ))
}

fn service_summary(
    config: &ResolvedConfig,
    snap: &StatusSnapshot,
    host: &str,
    service: &str,
    now: Timestamp,
) -> Option<ObjectSummary> {
    let def = config.service(host, service)?;
    let st = snap.tables.services.get(&(host.to_string(), service.to_string()))?;
    Some(ObjectSummary::build(
        host,
        Some(service),
        st,
        def.max_check_attempts,
        def.active_checks_enabled,
        def.passive_checks_enabled,
        now,
    ))
}

/// Builds the status document from one snapshot.
pub fn status_document(
    config: &ResolvedConfig,
    snap: &StatusSnapshot,
    filter: &StatusFilter,
    now: Timestamp,
) -> Result<StatusDocument, ApiError> {
    let members: Option<&[String]> = match &filter.hostgroup {
        None => None,
        Some(g) => Some(
            &config
                .hostgroups
                .get(g)
                .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, format!("unknown hostgroup '{g}'")))?
                .members,
        ),
    };
    let host_wanted = |h: &str| members.is_none_or(|m| m.iter().any(|x| x == h));
    let keep = |o: &ObjectSummary| {
        filter
            .statuses
            .as_ref()
            .is_none_or(|s| s.contains(&o.status))
            && (!filter.problems_only || o.is_problem())
    };

    let mut selected = Vec::new();
    for host in snap.tables.hosts.keys().filter(|h| host_wanted(h)) {
        if let Some(o) = host_summary(config, snap, host, now).filter(keep) {
            selected.push(o);
        }
    }
    for (h, s) in snap.tables.services.keys().filter(|(h, _)| host_wanted(h)) {
        if let Some(o) = service_summary(config, snap, h, s, now).filter(keep) {
            selected.push(o);
        }
    }
    let mut counts = Counts::default();
    for o in &selected {
        counts.add(o);
    }
    let total_objects = selected.len();
    let objects = selected
        .into_iter()
        .skip(filter.offset)
        .take(filter.limit.unwrap_or(usize::MAX))
        .collect();
    Ok(StatusDocument {
        generated_at: snap.generated_at,
        counts,
        total_objects,
        objects,
    })
}

#[derive(Debug, Serialize, Deserialize)]
pub struct HostDocument {
    pub host: ObjectSummary,
    pub services: Vec<ObjectSummary>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct AckBody {
    host: String,
    service: Option<String>,
    who: String,
    #[serde(default)]
    comment: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct DowntimeBody {
    host: String,
    service: Option<String>,
    start: DateTime<Utc>,
    end: DateTime<Utc>,
    #[serde(default)]
    who: String,
    #[serde(default)]
    comment: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TargetBody {
    host: String,
    service: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ResultBody {
    host: String,
    service: Option<String>,
    code: i64,
    #[serde(default)]
    output: String,
    /// Producer epoch seconds; defaults to the time of receipt.
    #[serde(alias = "received_at")]
    timestamp: Option<i64>,
}

fn target(host: String, service: Option<String>) -> ObjectRef {
    match service {
        Some(s) => ObjectRef::service(host, s),
        None => ObjectRef::host(host),
    }
}

fn parse_body<T: DeserializeOwned>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request(format!("invalid request body: {e}")))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Accepted {
    pub accepted: bool,
}

fn accepted() -> Response {
    (StatusCode::ACCEPTED, Json(Accepted { accepted: true })).into_response()
}

async fn get_status(
    State(app): State<AppState>,
    Query(q): Query<HashMap<String, String>>,
) -> Result<Json<StatusDocument>, ApiError> {
    let filter = StatusFilter::from_query(&q)?;
    let snap = app.engine.snapshot();
    Ok(Json(status_document(app.engine.config(), &snap, &filter, Utc::now())?))
}

async fn get_host(State(app): State<AppState>, Path(host): Path<String>) -> Result<Json<HostDocument>, ApiError> {
    let snap = app.engine.snapshot();
    let config = app.engine.config();
    let now = Utc::now();
    let summary = host_summary(config, &snap, &host, now)
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, format!("unknown host '{host}'")))?;
    let services = config
        .services_on(&host)
        .filter_map(|s| service_summary(config, &snap, &host, &s.service_description, now))
        .collect();
    Ok(Json(HostDocument {
        host: summary,
        services,
    }))
}

async fn get_service(
    State(app): State<AppState>,
    Path((host, service)): Path<(String, String)>,
) -> Result<Json<ObjectSummary>, ApiError> {
    let snap = app.engine.snapshot();
    service_summary(app.engine.config(), &snap, &host, &service, Utc::now())
        .map(Json)
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, format!("unknown service '{host};{service}'")))
}

async fn post_ack(State(app): State<AppState>, body: Bytes) -> Result<Response, ApiError> {
    let b: AckBody = parse_body(&body)?;
    if b.who.trim().is_empty() {
        return Err(ApiError::bad_request("'who' must not be empty"));
    }
    app.engine
        .command(Command::Ack {
            target: target(b.host, b.service),
            who: b.who,
            comment: b.comment,
        })
        .await?;
    Ok(accepted())
}

async fn post_downtime(State(app): State<AppState>, body: Bytes) -> Result<Response, ApiError> {
    let b: DowntimeBody = parse_body(&body)?;
    app.engine
        .command(Command::Downtime {
            target: target(b.host, b.service),
            start: b.start,
            end: b.end,
            who: b.who,
            comment: b.comment,
        })
        .await?;
    Ok(accepted())
}

async fn post_check(State(app): State<AppState>, body: Bytes) -> Result<Response, ApiError> {
    let b: TargetBody = parse_body(&body)?;
    app.engine
        .command(Command::ForceCheck(target(b.host, b.service)))
        .await?;
    Ok(accepted())
}

async fn post_result(State(app): State<AppState>, body: Bytes) -> Result<Response, ApiError> {
    let b: ResultBody = parse_body(&body)?;
    let code = u8::try_from(b.code)
        .ok()
        .filter(|c| *c <= if b.service.is_some() { 3 } else { 1 })
        .ok_or_else(|| ApiError::bad_request(format!("code {} out of range", b.code)))?;
    let at = b.timestamp.unwrap_or_else(|| Utc::now().timestamp());
    let line = match b.service {
        Some(s) => PassiveResultLine::service(at, b.host, s, code, b.output),
        None => PassiveResultLine::host(at, b.host, code, b.output),
    };
    line.validate().map_err(ApiError::bad_request)?;
    app.engine
        .command(Command::Result {
            line,
            source: "api".into(),
        })
        .await?;
    Ok(accepted())
}

async fn get_stats(State(app): State<AppState>) -> Json<crate::runtime::StatsDocument> {
    Json(app.engine.stats())
}

async fn not_found() -> ApiError {
    ApiError::new(StatusCode::NOT_FOUND, "no such endpoint")
}

async fn method_not_allowed() -> ApiError {
    ApiError::new(StatusCode::METHOD_NOT_ALLOWED, "method not allowed")
}

async fn require_token(State(app): State<AppState>, req: Request, next: Next) -> Response {
    if let Some(token) = &app.token {
        let given = req
            .headers()
            .get(header::AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "));
        if given != Some(token.as_str()) {
            return ApiError::new(StatusCode::UNAUTHORIZED, "missing or invalid bearer token").into_response();
        }
    }
    next.run(req).await
}

#[derive(Clone)]
struct AppState {
    engine: EngineClient,
    token: Option<String>,
}

/// The API router. With a token set every request needs
/// `Authorization: Bearer <token>`.
pub fn router(engine: EngineClient, token: Option<String>) -> Router {
    let state = AppState { engine, token };
    Router::new()
        .route("/api/v1/status", get(get_status))
        .route("/api/v1/stats", get(get_stats))
        .route("/api/v1/objects/{host}", get(get_host))
        .route("/api/v1/objects/{host}/{service}", get(get_service))
        .route("/api/v1/ack", post(post_ack))
        .route("/api/v1/downtime", post(post_downtime))
        .route("/api/v1/check", post(post_check))
        .route("/api/v1/result", post(post_result))
        .fallback(not_found)
        .method_not_allowed_fallback(method_not_allowed)
        .layer(middleware::from_fn_with_state(state.clone(), require_token))
        .with_state(state)
}
