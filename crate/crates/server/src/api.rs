//! The `/v1` HTTP API.
//!
//! Every response carries an `x-request-id` header; error responses carry a
//! JSON [`ApiError`] body with the same id. Store calls run on the blocking
//! pool and webhook deliveries happen with no store lock held.

use std::collections::HashMap;
use std::net::{SocketAddr, TcpListener as StdListener};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::{Path, Query, Request, State};
use axum::http::{HeaderMap, HeaderValue, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use bodynet_core::status::format_status;
use bodynet_core::wire::{
    recompute, summary_mismatch, ApiError, JoinTeam, LeaderboardMetric, NewTeam, NewUser,
    ShareReceipt, ShareRequest, WebhookMessage, WorkoutReceipt, WorkoutRecord, WorkoutUpload,
    FLAG_SUMMARY_MISMATCH,
};
use serde::de::DeserializeOwned;
use serde_json::json;
use sha2::{Digest, Sha256};
use tokio::sync::oneshot;
use uuid::Uuid;

use crate::auth::{Principal, TokenTable};
use crate::store::{ShareRecord, Store, StoreError, TimeRange};

/// Header a client may set to make a share request idempotent.
pub const IDEMPOTENCY_KEY: &str = "idempotency-key";

pub struct Shared {
    pub store: Store,
    pub tokens: TokenTable,
    webhook: ureq::Agent,
    next_request: AtomicU64,
}

#[derive(Clone)]
pub struct AppState(Arc<Shared>);

impl AppState {
    pub fn new(store: Store, tokens: TokenTable, webhook_timeout: Duration) -> Self {
        let webhook = ureq::Agent::config_builder()
            .timeout_global(Some(webhook_timeout))
            .build()
            .new_agent();
        Self(Arc::new(Shared { store, tokens, webhook, next_request: AtomicU64::new(1) }))
    }

    pub fn store(&self) -> &Store {
        &self.0.store
    }
}

/// An error on its way out; the request-id layer turns it into a body.
#[derive(Debug)]
pub struct ApiErr {
    status: StatusCode,
    msg: String,
}

#[derive(Clone)]
struct ErrorMessage(String);

fn err(status: StatusCode, msg: impl Into<String>) -> ApiErr {
    ApiErr { status, msg: msg.into() }
}

impl IntoResponse for ApiErr {
    fn into_response(self) -> Response {
        let mut r = self.status.into_response();
        r.extensions_mut().insert(ErrorMessage(self.msg));
        r
    }
}

impl From<StoreError> for ApiErr {
    fn from(e: StoreError) -> Self {
        let status = match &e {
            StoreError::DuplicateTeamName(_) => StatusCode::CONFLICT,
            StoreError::UnknownUser(_) | StoreError::UnknownTeam(_) | StoreError::UnknownWorkout(_) => {
                StatusCode::NOT_FOUND
            }
            StoreError::EmptyTeamName
            | StoreError::MalformedSamples(_)
            | StoreError::InvalidWorkout(_)
            | StoreError::InvalidRange { .. }
            | StoreError::Import { .. } => StatusCode::UNPROCESSABLE_ENTITY,
            StoreError::Sql(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        err(status, e.to_string())
    }
}

type ApiResult<T = Response> = Result<T, ApiErr>;

async fn with_request_id(State(st): State<AppState>, req: Request, next: Next) -> Response {
    let id = format!("req-{:08x}", st.0.next_request.fetch_add(1, Ordering::Relaxed));
    let mut resp = next.run(req).await;
    if let Some(ErrorMessage(msg)) = resp.extensions_mut().remove::<ErrorMessage>() {
        let status = resp.status();
        resp = (status, Json(ApiError { error: msg, request_id: id.clone() })).into_response();
    }
    resp.headers_mut()
        .insert("x-request-id", HeaderValue::from_str(&id).expect("ascii id"));
    resp
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/v1/health", get(|| async { Json(json!({"status": "ok"})) }))
        .route("/v1/users", post(post_user))
        .route("/v1/users/{id}/workouts", get(get_history))
        .route("/v1/teams", post(post_team))
        .route("/v1/teams/{id}/members", post(post_member))
        .route("/v1/teams/{id}/leaderboard", get(get_leaderboard))
        .route("/v1/workouts", post(post_workout))
        .route("/v1/workouts/{id}", get(get_workout))
        .route("/v1/workouts/{id}/samples", get(get_samples))
        .route("/v1/share", post(post_share))
        .fallback(|| async { err(StatusCode::NOT_FOUND, "no such endpoint") })
        .layer(middleware::from_fn_with_state(state.clone(), with_request_id))
        .with_state(state)
}

fn authenticate(st: &AppState, headers: &HeaderMap) -> ApiResult<Principal> {
    let header = headers.get("authorization").and_then(|v| v.to_str().ok());
    st.0.tokens
        .authenticate(header)
        .ok_or_else(|| err(StatusCode::UNAUTHORIZED, "missing or unknown bearer token"))
}

fn forbidden() -> ApiErr {
    err(StatusCode::FORBIDDEN, "not permitted for this token")
}

fn parse_body<T: DeserializeOwned>(body: &Bytes) -> ApiResult<T> {
    serde_json::from_slice(body).map_err(|e| err(StatusCode::UNPROCESSABLE_ENTITY, format!("malformed body: {e}")))
}

fn parse_id(s: &str, what: &str) -> ApiResult<Uuid> {
    Uuid::parse_str(s).map_err(|_| err(StatusCode::NOT_FOUND, format!("unknown {what} {s}")))
}

fn parse_range(q: &HashMap<String, String>) -> ApiResult<TimeRange> {
    let bound = |k: &str| -> ApiResult<Option<i64>> {
        q.get(k)
            .filter(|v| !v.is_empty())
            .map(|v| v.parse().map_err(|_| err(StatusCode::UNPROCESSABLE_ENTITY, format!("{k} must be unix milliseconds"))))
            .transpose()
    };
    Ok(TimeRange::new(bound("from")?, bound("to")?)?)
}

async fn blocking<T, F>(st: &AppState, f: F) -> ApiResult<T>
where
    T: Send + 'static,
    F: FnOnce(&Store) -> Result<T, StoreError> + Send + 'static,
{
    let shared = st.0.clone();
    tokio::task::spawn_blocking(move || f(&shared.store))
        .await
        .map_err(|e| err(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?
        .map_err(ApiErr::from)
}

/// May `p` see data belonging to `owner`? Owners, admins and teammates can.
async fn can_view(st: &AppState, p: Principal, owner: Uuid) -> ApiResult<bool> {
    match p {
        Principal::Admin => Ok(true),
        Principal::User(me) => blocking(st, move |s| s.share_team(me, owner)).await,
    }
}

fn created(is_new: bool) -> StatusCode {
    if is_new { StatusCode::CREATED } else { StatusCode::OK }
}

async fn post_user(State(st): State<AppState>, headers: HeaderMap, body: Bytes) -> ApiResult {
    let p = authenticate(&st, &headers)?;
    let u: NewUser = parse_body(&body)?;
    if u.display_name.trim().is_empty() {
        return Err(err(StatusCode::UNPROCESSABLE_ENTITY, "display_name must not be empty"));
    }
    if !p.acts_as(u.user_id) {
        return Err(forbidden());
    }
    let id = u.user_id;
    let (is_new, user) = blocking(&st, move |s| {
        let n = s.upsert_user(&u)?;
        Ok((n, s.user(id)?))
    })
    .await?;
    Ok((created(is_new), Json(user)).into_response())
}

async fn post_team(State(st): State<AppState>, headers: HeaderMap, body: Bytes) -> ApiResult {
    authenticate(&st, &headers)?;
    let t: NewTeam = parse_body(&body)?;
    let (team, is_new) = blocking(&st, move |s| s.create_team(&t)).await?;
    Ok((created(is_new), Json(team)).into_response())
}

async fn post_member(
    State(st): State<AppState>,
    Path(team): Path<String>,
    headers: HeaderMap,
    body: Bytes,
) -> ApiResult {
    let p = authenticate(&st, &headers)?;
    let team = parse_id(&team, "team")?;
    let j: JoinTeam = parse_body(&body)?;
    if !p.acts_as(j.user_id) {
        return Err(forbidden());
    }
    let user = j.user_id;
    let is_new = blocking(&st, move |s| s.join_team(team, user)).await?;
    let body = json!({"team_id": team, "user_id": user, "created": is_new});
    Ok((created(is_new), Json(body)).into_response())
}

async fn post_workout(State(st): State<AppState>, headers: HeaderMap, body: Bytes) -> ApiResult {
    let p = authenticate(&st, &headers)?;
    let up: WorkoutUpload = parse_body(&body)?;
    up.validate()
        .map_err(|e| err(StatusCode::UNPROCESSABLE_ENTITY, e.to_string()))?;
    if !p.acts_as(up.user_id) {
        return Err(forbidden());
    }
    let server = recompute(&up.samples);
    let mismatch = summary_mismatch(&up.summary, &server);
    let mut summary = up.summary;
    // Raw samples are authoritative for what they cover.
    if mismatch {
        summary.avg_hr_bpm = server.avg_hr_bpm;
        summary.distance_m = server.distance_m;
    }
    let record = WorkoutRecord {
        workout_id: up.workout_id,
        user_id: up.user_id,
        started_at: up.started_at,
        duration_s: up.duration_s,
        summary,
        summary_mismatch: mismatch,
    };
    let samples = up.samples;
    let (workout_id, is_new) = blocking(&st, move |s| s.insert_workout(&record, &samples)).await?;
    let receipt = WorkoutReceipt {
        workout_id,
        created: is_new,
        flags: if mismatch { vec![FLAG_SUMMARY_MISMATCH.to_string()] } else { Vec::new() },
        recomputed: Some(server),
    };
    Ok((created(is_new), Json(receipt)).into_response())
}

async fn get_history(
    State(st): State<AppState>,
    Path(user): Path<String>,
    Query(q): Query<HashMap<String, String>>,
    headers: HeaderMap,
) -> ApiResult {
    let p = authenticate(&st, &headers)?;
    let user = parse_id(&user, "user")?;
    let range = parse_range(&q)?;
    if blocking(&st, move |s| s.user(user)).await?.is_none() {
        return Err(StoreError::UnknownUser(user).into());
    }
    if !can_view(&st, p, user).await? {
        return Err(forbidden());
    }
    let rows = blocking(&st, move |s| s.query_history(user, range)).await?;
    Ok(Json(rows).into_response())
}

async fn owned_workout(st: &AppState, p: Principal, id: &str) -> ApiResult<WorkoutRecord> {
    let id = parse_id(id, "workout")?;
    let w = blocking(st, move |s| s.workout(id))
        .await?
        .ok_or(StoreError::UnknownWorkout(id))?;
    if !can_view(st, p, w.user_id).await? {
        return Err(forbidden());
    }
    Ok(w)
}

async fn get_workout(State(st): State<AppState>, Path(id): Path<String>, headers: HeaderMap) -> ApiResult {
    let p = authenticate(&st, &headers)?;
    Ok(Json(owned_workout(&st, p, &id).await?).into_response())
}

async fn get_samples(State(st): State<AppState>, Path(id): Path<String>, headers: HeaderMap) -> ApiResult {
    let p = authenticate(&st, &headers)?;
    let w = owned_workout(&st, p, &id).await?;
    let rows = blocking(&st, move |s| s.samples(w.workout_id)).await?;
    Ok(Json(rows).into_response())
}

async fn get_leaderboard(
    State(st): State<AppState>,
    Path(team): Path<String>,
    Query(q): Query<HashMap<String, String>>,
    headers: HeaderMap,
) -> ApiResult {
    let p = authenticate(&st, &headers)?;
    let team = parse_id(&team, "team")?;
    if blocking(&st, move |s| s.team(team)).await?.is_none() {
        return Err(StoreError::UnknownTeam(team).into());
    }
    let metric = q
        .get("metric")
        .and_then(|m| LeaderboardMetric::parse(m))
        .ok_or_else(|| err(StatusCode::UNPROCESSABLE_ENTITY, "metric must be one of total_duration_s, workout_count, total_distance_m, avg_hr_bpm"))?;
    let range = parse_range(&q)?;
    if let Principal::User(me) = p {
        if !blocking(&st, move |s| s.is_member(team, me)).await? {
            return Err(forbidden());
        }
    }
    let rows = blocking(&st, move |s| s.leaderboard(team, range, metric)).await?;
    Ok(Json(rows).into_response())
}

fn share_key(headers: &HeaderMap, req: &ShareRequest) -> String {
    if let Some(k) = headers.get(IDEMPOTENCY_KEY).and_then(|v| v.to_str().ok()) {
        return k.to_string();
    }
    let mut h = Sha256::new();
    for part in [req.user_id.as_bytes().as_slice(), req.workout_id.as_bytes(), req.target.as_bytes()] {
        h.update((part.len() as u64).to_le_bytes());
        h.update(part);
    }
    hex::encode(h.finalize())
}

async fn post_share(State(st): State<AppState>, headers: HeaderMap, body: Bytes) -> ApiResult {
    let p = authenticate(&st, &headers)?;
    let req: ShareRequest = parse_body(&body)?;
    if !(req.target.starts_with("http://") || req.target.starts_with("https://")) {
        return Err(err(StatusCode::UNPROCESSABLE_ENTITY, "target must be an http(s) URL"));
    }
    if !p.acts_as(req.user_id) {
        return Err(forbidden());
    }
    let wid = req.workout_id;
    let w = blocking(&st, move |s| s.workout(wid))
        .await?
        .filter(|w| w.user_id == req.user_id)
        .ok_or(StoreError::UnknownWorkout(wid))?;

    let key = share_key(&headers, &req);
    let k = key.clone();
    let previous = blocking(&st, move |s| s.share(&k)).await?;
    if let Some(prev) = previous.as_ref().filter(|r| r.delivered) {
        return Ok(Json(ShareReceipt {
            delivered: true,
            text: prev.text.clone(),
            status: prev.status,
            error: None,
        })
        .into_response());
    }

    let text = format_status(&w.summary, None);
    let message = WebhookMessage { user_id: req.user_id, workout_id: wid, text: text.clone() };
    let agent = st.0.webhook.clone();
    let target = req.target.clone();
    let outcome = tokio::task::spawn_blocking(move || agent.post(&target).send_json(&message))
        .await
        .map_err(|e| err(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?;
    let (delivered, status, error) = match outcome {
        Ok(resp) => (true, Some(resp.status().as_u16()), None),
        Err(ureq::Error::StatusCode(code)) => (false, Some(code), Some(format!("webhook answered {code}"))),
        Err(e) => (false, None, Some(e.to_string())),
    };
    let record = ShareRecord {
        share_key: key,
        workout_id: wid,
        target: req.target,
        text: text.clone(),
        delivered,
        status,
        error: error.clone(),
        attempts: previous.map_or(0, |r| r.attempts) + 1,
    };
    blocking(&st, move |s| s.record_share(&record)).await?;
    if delivered {
        Ok(Json(ShareReceipt { delivered, text, status, error }).into_response())
    } else {
        Err(err(StatusCode::BAD_GATEWAY, format!("webhook unreachable: {}", error.unwrap_or_default())))
    }
}

/// A server running on its own thread and runtime, stopped on drop.
pub struct ServerHandle {
    addr: SocketAddr,
    state: AppState,
    shutdown: Option<oneshot::Sender<()>>,
    thread: Option<JoinHandle<std::io::Result<()>>>,
}

impl ServerHandle {
    pub fn spawn(state: AppState, addr: SocketAddr) -> std::io::Result<Self> {
        let listener = StdListener::bind(addr)?;
        listener.set_nonblocking(true)?;
        let addr = listener.local_addr()?;
        let (tx, rx) = oneshot::channel::<()>();
        let app = router(state.clone());
        let thread = std::thread::Builder::new()
            .name("bodynet-server".into())
            .spawn(move || {
                let rt = tokio::runtime::Builder::new_multi_thread()
                    .worker_threads(2)
                    .enable_all()
                    .build()?;
                rt.block_on(async move {
                    let listener = tokio::net::TcpListener::from_std(listener)?;
                    axum::serve(listener, app)
                        .with_graceful_shutdown(async {
                            let _ = rx.await;
                        })
                        .await
                })
            })?;
        Ok(Self { addr, state, shutdown: Some(tx), thread: Some(thread) })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn base_url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn store(&self) -> &Store {
        self.state.store()
    }

    /// Stops accepting connections and waits for the server thread.
    pub fn stop(mut self) -> std::io::Result<()> {
        self.stop_inner()
    }

    fn stop_inner(&mut self) -> std::io::Result<()> {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        match self.thread.take() {
            Some(t) => t.join().unwrap_or(Ok(())),
            None => Ok(()),
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        let _ = self.stop_inner();
    }
}

/// Runs the server on the current runtime until the listener fails.
pub async fn serve(listener: tokio::net::TcpListener, state: AppState) -> std::io::Result<()> {
    axum::serve(listener, router(state)).await
}
