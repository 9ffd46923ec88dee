//! JSON service over a loaded [`Session`].
//!
//! Routes:
//! * `GET /events`
//! * `GET /events/{id}/messages?informative=&lang=&page=&page_size=`
//! * `GET /queries`, `POST /queries`
//! * `POST /rank` `{query_id, event_id, k?}`
//! * `POST /summarize` `{query_id, event_id, mode?, budget?, k?}`
//!
//! Every body carries `seed`, `encoder` and `generator`. Errors are
//! `{"error": ..}` with 400 (bad request), 404 (unknown id) or 503 (backend
//! unavailable or request timed out, with `Retry-After`).

use std::net::SocketAddr;
use std::sync::Arc;
use std::time::{Duration, Instant};

use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{Path, Query as UrlQuery, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use crisis_scope_core::models::RankedCandidate;
use crisis_scope_core::summarize::{Segment, SummaryMode};
use crisis_scope_core::{CategoryId, Message, Query};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::session::{Provenance, Session, SessionError};

const DEFAULT_PAGE_SIZE: usize = 50;
const MAX_PAGE_SIZE: usize = 1000;

#[derive(Clone)]
struct AppState {
    session: Arc<Session>,
    timeout: Duration,
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
    retry_after: Option<u64>,
}

impl ApiError {
    fn bad_request(message: impl Into<String>) -> Self {
        ApiError {
            status: StatusCode::BAD_REQUEST,
            message: message.into(),
            retry_after: None,
        }
    }

    fn unavailable(message: impl Into<String>, retry_after: u64) -> Self {
        ApiError {
            status: StatusCode::SERVICE_UNAVAILABLE,
            message: message.into(),
            retry_after: Some(retry_after),
        }
    }
}

impl From<SessionError> for ApiError {
    fn from(e: SessionError) -> Self {
        match e {
            SessionError::NotFound(_) => ApiError {
                status: StatusCode::NOT_FOUND,
                message: e.to_string(),
                retry_after: None,
            },
            SessionError::Unavailable(_) | SessionError::Backend(_) => {
                ApiError::unavailable(e.to_string(), 30)
            }
            SessionError::Invalid(_) => ApiError::bad_request(e.to_string()),
            other => ApiError {
                status: StatusCode::INTERNAL_SERVER_ERROR,
                message: other.to_string(),
                retry_after: None,
            },
        }
    }
}

impl From<JsonRejection> for ApiError {
    fn from(e: JsonRejection) -> Self {
        ApiError::bad_request(e.body_text())
    }
}

impl From<QueryRejection> for ApiError {
    fn from(e: QueryRejection) -> Self {
        ApiError::bad_request(e.body_text())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let mut res = (self.status, Json(json!({ "error": self.message }))).into_response();
        if let Some(secs) = self.retry_after {
            res.headers_mut()
                .insert(header::RETRY_AFTER, HeaderValue::from(secs));
        }
        res
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

#[derive(Serialize)]
struct EventInfo {
    id: String,
    name: String,
    messages: usize,
    informative: usize,
    languages: Vec<String>,
    has_report: bool,
}

#[derive(Serialize)]
struct EventsResponse {
    #[serde(flatten)]
    provenance: Provenance,
    events: Vec<EventInfo>,
}

async fn list_events(State(state): State<AppState>) -> ApiResult<EventsResponse> {
    let s = &state.session;
    let events = s
        .collections()
        .iter()
        .map(|c| EventInfo {
            id: c.event_id().to_string(),
            name: c.name().to_string(),
            messages: c.len(),
            informative: c.informative_count(),
            languages: c.languages().iter().cloned().collect(),
            has_report: s.report(c.event_id()).is_some(),
        })
        .collect();
    Ok(Json(EventsResponse {
        provenance: s.provenance(),
        events,
    }))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct MessageFilter {
    informative: Option<bool>,
    lang: Option<String>,
    page: Option<usize>,
    page_size: Option<usize>,
}

#[derive(Serialize)]
struct MessagesResponse {
    #[serde(flatten)]
    provenance: Provenance,
    event_id: String,
    page: usize,
    page_size: usize,
    total: usize,
    messages: Vec<Message>,
}

async fn list_messages(
    State(state): State<AppState>,
    Path(id): Path<String>,
    filter: Result<UrlQuery<MessageFilter>, QueryRejection>,
) -> ApiResult<MessagesResponse> {
    let UrlQuery(filter) = filter?;
    let page = filter.page.unwrap_or(1);
    let page_size = filter.page_size.unwrap_or(DEFAULT_PAGE_SIZE);
    if page == 0 || page_size == 0 || page_size > MAX_PAGE_SIZE {
        return Err(ApiError::bad_request(format!(
            "page must be >= 1 and page_size in 1..={MAX_PAGE_SIZE}"
        )));
    }
    let collection = state.session.event(&id)?;
    let matching: Vec<&Message> = collection
        .messages()
        .iter()
        .filter(|m| filter.informative.is_none_or(|f| m.informative == Some(f)))
        .filter(|m| filter.lang.as_ref().is_none_or(|l| &m.lang == l))
        .collect();
    let messages = matching
        .iter()
        .skip((page - 1) * page_size)
        .take(page_size)
        .map(|m| (*m).clone())
        .collect();
    Ok(Json(MessagesResponse {
        provenance: state.session.provenance(),
        event_id: id,
        page,
        page_size,
        total: matching.len(),
        messages,
    }))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct QueryUpsert {
    id: Option<String>,
    category: CategoryId,
    keywords: Vec<String>,
    templates: Vec<String>,
    prototypes: Vec<String>,
}

#[derive(Serialize)]
struct QueryResponse {
    #[serde(flatten)]
    provenance: Provenance,
    id: String,
    query: Query,
}

async fn upsert_query(
    State(state): State<AppState>,
    body: Result<Json<QueryUpsert>, JsonRejection>,
) -> ApiResult<QueryResponse> {
    let Json(body) = body?;
    let query = Query::new(body.category, body.keywords, body.templates, body.prototypes)
        .map_err(|e| ApiError::bad_request(e.to_string()))?;
    let id = state.session.upsert_query(body.id, query)?;
    Ok(Json(QueryResponse {
        provenance: state.session.provenance(),
        query: state.session.query(&id)?,
        id,
    }))
}

#[derive(Serialize)]
struct QueriesResponse {
    #[serde(flatten)]
    provenance: Provenance,
    queries: std::collections::BTreeMap<String, Query>,
}

async fn list_queries(State(state): State<AppState>) -> ApiResult<QueriesResponse> {
    Ok(Json(QueriesResponse {
        provenance: state.session.provenance(),
        queries: state.session.queries(),
    }))
}

/// Runs CPU-bound session work off the async runtime, bounded by the
/// configured timeout.
async fn blocking<T, F>(state: &AppState, f: F) -> Result<T, ApiError>
where
    T: Send + 'static,
    F: FnOnce(&Session) -> Result<T, SessionError> + Send + 'static,
{
    let session = state.session.clone();
    let started = Instant::now();
    let task = tokio::task::spawn_blocking(move || f(&session));
    match tokio::time::timeout(state.timeout, task).await {
        Ok(Ok(_)) if started.elapsed() >= state.timeout => Err(timed_out(state.timeout)),
        Ok(Ok(result)) => result.map_err(ApiError::from),
        Ok(Err(join)) => Err(ApiError {
            status: StatusCode::INTERNAL_SERVER_ERROR,
            message: join.to_string(),
            retry_after: None,
        }),
        Err(_) => Err(timed_out(state.timeout)),
    }
}

fn timed_out(timeout: Duration) -> ApiError {
    ApiError::unavailable(
        format!("request exceeded {} ms", timeout.as_millis()),
        timeout.as_secs().max(1),
    )
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RankRequest {
    query_id: String,
    event_id: String,
    k: Option<usize>,
}

#[derive(Serialize)]
struct RankResponse {
    #[serde(flatten)]
    provenance: Provenance,
    query_id: String,
    event_id: String,
    candidates: Vec<RankedCandidate>,
}

async fn rank(
    State(state): State<AppState>,
    body: Result<Json<RankRequest>, JsonRejection>,
) -> ApiResult<RankResponse> {
    let Json(req) = body?;
    if req.k == Some(0) {
        return Err(ApiError::bad_request("k must be at least 1"));
    }
    let query = state.session.query(&req.query_id)?;
    state.session.event(&req.event_id)?;
    let event_id = req.event_id.clone();
    let candidates = blocking(&state, move |s| s.rank(&query, &event_id, req.k)).await?;
    Ok(Json(RankResponse {
        provenance: state.session.provenance(),
        query_id: req.query_id,
        event_id: req.event_id,
        candidates,
    }))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SummarizeRequest {
    query_id: String,
    event_id: String,
    mode: Option<SummaryMode>,
    budget: Option<usize>,
    k: Option<usize>,
}

#[derive(Serialize)]
struct SummarizeResponse {
    #[serde(flatten)]
    provenance: Provenance,
    query_id: String,
    event_id: String,
    mode: SummaryMode,
    full_text: String,
    segments: Vec<Segment>,
}

async fn summarize(
    State(state): State<AppState>,
    body: Result<Json<SummarizeRequest>, JsonRejection>,
) -> ApiResult<SummarizeResponse> {
    let Json(req) = body?;
    if req.k == Some(0) {
        return Err(ApiError::bad_request("k must be at least 1"));
    }
    let query = state.session.query(&req.query_id)?;
    state.session.event(&req.event_id)?;
    let event_id = req.event_id.clone();
    let (mode, budget, k) = (req.mode, req.budget, req.k);
    let summary = blocking(&state, move |s| s.summarize(&query, &event_id, mode, budget, k)).await?;
    Ok(Json(SummarizeResponse {
        provenance: state.session.provenance(),
        query_id: req.query_id,
        event_id: req.event_id,
        mode: summary.mode,
        full_text: summary.full_text,
        segments: summary.segments,
    }))
}

async fn fallback() -> ApiError {
    ApiError {
        status: StatusCode::NOT_FOUND,
        message: "no such route".into(),
        retry_after: None,
    }
}

/// Router with the timeout taken from the session config.
pub fn router(session: Arc<Session>) -> Router {
    let timeout = Duration::from_secs(session.config().request_timeout_secs.max(1));
    router_with_timeout(session, timeout)
}

pub fn router_with_timeout(session: Arc<Session>, timeout: Duration) -> Router {
    Router::new()
        .route("/events", get(list_events))
        .route("/events/{id}/messages", get(list_messages))
        .route("/queries", get(list_queries).post(upsert_query))
        .route("/rank", post(rank))
        .route("/summarize", post(summarize))
        .fallback(fallback)
        .with_state(AppState { session, timeout })
}

/// Serves until interrupted.
pub async fn serve(session: Arc<Session>, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(addr = %listener.local_addr()?, "listening");
    axum::serve(listener, router(session))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
