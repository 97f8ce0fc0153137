//! HTTP/JSON API over a policy graph, its registered desires and the
//! episodes it was built from.
//!
//! Every handler reads from an immutable [`Session`] snapshot. Registering
//! or deleting a desire builds a new snapshot under an exclusive writer lock
//! and swaps it in, so readers never observe a half-propagated index.

mod error;
mod session;

use std::net::SocketAddr;
use std::sync::{Arc, RwLock};

use axum::extract::rejection::JsonRejection;
use axum::extract::{FromRequestParts, Path, Query, State};
use axum::http::request::Parts;
use axum::http::{header, StatusCode};
use axum::response::IntoResponse;
use axum::routing::get;
use axum::{Json, Router};
use ipg_core::explain::{how, how_stochastic, what, why, Explanation, DEFAULT_MAX_DEPTH};
use ipg_core::graph::{Distributions, GraphSummary};
use ipg_core::intention::{CommitmentThreshold, DesireSpec};
use ipg_core::metrics::parse_grid;
use ipg_core::report::MetricsReport;
use ipg_core::revision::{annotate, find_regions, Region, RegionConfig, TimelineAnnotation};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use tokio::sync::Mutex;

pub use error::ApiError;
pub use session::{Registration, Session};

pub const DEFAULT_PER_PAGE: usize = 100;
pub const MAX_PER_PAGE: usize = 1000;
pub const DEFAULT_SAMPLES: usize = 1000;

type ApiResult<T> = Result<T, ApiError>;

pub struct AppState {
    session: RwLock<Arc<Session>>,
    writer: Mutex<()>,
}

impl AppState {
    pub fn new(session: Session) -> Arc<Self> {
        Arc::new(AppState {
            session: RwLock::new(Arc::new(session)),
            writer: Mutex::new(()),
        })
    }

    /// The current session snapshot.
    pub fn snapshot(&self) -> Arc<Session> {
        self.session.read().unwrap_or_else(|e| e.into_inner()).clone()
    }

    fn replace(&self, next: Session) {
        *self.session.write().unwrap_or_else(|e| e.into_inner()) = Arc::new(next);
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/graph", get(graph))
        .route("/graph/summary", get(summary))
        .route("/states", get(states))
        .route("/state/{id}", get(state_detail))
        .route("/desires", get(list_desires).post(add_desire))
        .route("/desires/{id}", axum::routing::delete(remove_desire))
        .route("/query/what", get(query_what))
        .route("/query/how", get(query_how))
        .route("/query/why", get(query_why))
        .route("/metrics", get(metrics))
        .route("/episodes", get(episodes))
        .route("/timeline/{episode}", get(timeline))
        .route("/regions/{episode}", get(regions))
        .with_state(state)
}

/// Serves `session` on `addr` until the process is stopped.
pub async fn serve(session: Session, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(AppState::new(session))).await
}

/// Blocking entry point: serves on `127.0.0.1:port` from a fresh runtime.
pub fn run(session: Session, port: u16) -> std::io::Result<()> {
    tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()?
        .block_on(serve(session, SocketAddr::from(([127, 0, 0, 1], port))))
}

/// Query-string extractor whose rejections use the JSON error body.
struct Params<T>(T);

impl<S: Send + Sync, T: DeserializeOwned> FromRequestParts<S> for Params<T> {
    type Rejection = ApiError;

    async fn from_request_parts(parts: &mut Parts, state: &S) -> ApiResult<Self> {
        match Query::<T>::from_request_parts(parts, state).await {
            Ok(Query(v)) => Ok(Params(v)),
            Err(e) => Err(ApiError::new(e.status(), "bad_request", e.body_text())),
        }
    }
}

fn commitment(session: &Session, c: Option<f64>) -> ApiResult<CommitmentThreshold> {
    match c {
        Some(c) => Ok(CommitmentThreshold::new(c)?),
        None => Ok(session.commitment()),
    }
}

async fn graph(State(app): State<Arc<AppState>>) -> ApiResult<impl IntoResponse> {
    let body = app.snapshot().graph().to_json()?;
    Ok(([(header::CONTENT_TYPE, "application/json")], body))
}

async fn summary(State(app): State<Arc<AppState>>) -> Json<GraphSummary> {
    Json(app.snapshot().graph().summary())
}

#[derive(Deserialize)]
struct PageParams {
    page: Option<usize>,
    per_page: Option<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct StateEntry {
    pub id: String,
    pub occupancy: u64,
    pub probability: f64,
    pub terminal: bool,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct StatesPage {
    /// Zero-based.
    pub page: usize,
    pub per_page: usize,
    pub total: usize,
    pub states: Vec<StateEntry>,
}

async fn states(State(app): State<Arc<AppState>>, Params(p): Params<PageParams>) -> ApiResult<Json<StatesPage>> {
    let page = p.page.unwrap_or(0);
    let per_page = p.per_page.unwrap_or(DEFAULT_PER_PAGE);
    if per_page == 0 || per_page > MAX_PER_PAGE {
        return Err(ApiError::new(
            StatusCode::UNPROCESSABLE_ENTITY,
            "config",
            format!("per_page must lie in 1..={MAX_PER_PAGE}"),
        ));
    }
    let session = app.snapshot();
    let g = session.graph();
    let states = (0..g.len())
        .skip(page.saturating_mul(per_page))
        .take(per_page)
        .map(|id| StateEntry {
            id: g.node(id).id.clone(),
            occupancy: g.node(id).occupancy,
            probability: g.state_probability(id),
            terminal: g.node(id).is_terminal(),
        })
        .collect();
    Ok(Json(StatesPage {
        page,
        per_page,
        total: g.len(),
        states,
    }))
}

#[derive(Deserialize)]
struct CommitmentParams {
    commitment: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct StateIntention {
    pub desire: String,
    pub value: f64,
    pub in_region: bool,
    pub attributed: bool,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct StateDetail {
    pub id: String,
    pub predicates: Map<String, Value>,
    pub occupancy: u64,
    pub commitment: f64,
    pub distributions: Distributions,
    pub intentions: Vec<StateIntention>,
}

async fn state_detail(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
    Params(p): Params<CommitmentParams>,
) -> ApiResult<Json<StateDetail>> {
    let session = app.snapshot();
    let c = commitment(&session, p.commitment)?;
    let (node, state) = session.state(&id).map_err(ApiError::state)?;
    let g = session.graph();
    Ok(Json(StateDetail {
        id: g.node(node).id.clone(),
        predicates: state
            .pairs()
            .map(|(k, v)| (k.to_string(), Value::from(v)))
            .collect(),
        occupancy: g.node(node).occupancy,
        commitment: c.value(),
        distributions: g.distributions_of(node),
        intentions: session
            .indices()
            .iter()
            .map(|ix| StateIntention {
                desire: ix.desire().id.clone(),
                value: ix.value(node),
                in_region: ix.in_region(node),
                attributed: c.attributes(ix.value(node)),
            })
            .collect(),
    }))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct DesireEntry {
    #[serde(flatten)]
    pub spec: DesireSpec,
    /// Worklist updates spent propagating the desire.
    pub updates: u64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Registered {
    pub desire: DesireEntry,
    pub duration_ms: f64,
    pub metrics: MetricsReport,
}

fn desire_entries(session: &Session) -> Vec<DesireEntry> {
    session
        .indices()
        .iter()
        .map(|ix| DesireEntry {
            spec: ix.desire().to_spec(),
            updates: ix.updates(),
        })
        .collect()
}

async fn list_desires(State(app): State<Arc<AppState>>) -> Json<Vec<DesireEntry>> {
    Json(desire_entries(&app.snapshot()))
}

async fn add_desire(
    State(app): State<Arc<AppState>>,
    body: Result<Json<DesireSpec>, JsonRejection>,
) -> ApiResult<(StatusCode, Json<Registered>)> {
    let Json(spec) = body.map_err(|e| ApiError::new(e.status(), "bad_request", e.body_text()))?;
    let _writer = app.writer.lock().await;
    let current = app.snapshot();
    if current.index(&spec.id).is_some() {
        return Err(ApiError::new(
            StatusCode::CONFLICT,
            "duplicate_desire",
            format!("desire `{}` is already registered", spec.id),
        ));
    }
    let reg = tokio::task::spawn_blocking(move || current.with_desire(&spec))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))??;
    let session = reg.session;
    let metrics = MetricsReport::build(session.graph(), session.indices(), session.commitment(), None)?;
    let index = session.indices().last().expect("just registered");
    let entry = DesireEntry {
        spec: index.desire().to_spec(),
        updates: reg.updates,
    };
    log::info!(
        "registered desire `{}` ({} updates, {:?})",
        entry.spec.id,
        reg.updates,
        reg.duration
    );
    app.replace(session);
    Ok((
        StatusCode::CREATED,
        Json(Registered {
            desire: entry,
            duration_ms: reg.duration.as_secs_f64() * 1e3,
            metrics,
        }),
    ))
}

async fn remove_desire(State(app): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<StatusCode> {
    let _writer = app.writer.lock().await;
    let next = app
        .snapshot()
        .without_desire(&id)
        .ok_or_else(|| ApiError::not_found("unknown_desire", format!("no desire `{id}` is registered")))?;
    app.replace(next);
    log::info!("removed desire `{id}`");
    Ok(StatusCode::NO_CONTENT)
}

/// A query answer with its text rendering.
#[derive(Debug, Serialize, Deserialize)]
pub struct QueryResponse {
    #[serde(flatten)]
    pub answer: Explanation,
    pub text: String,
}

fn respond(session: &Session, answer: Explanation) -> ApiResult<Json<QueryResponse>> {
    let graph = session.graph();
    let text = session.templates().render(&answer, &|id| graph.parse_state(id))?;
    Ok(Json(QueryResponse { answer, text }))
}

#[derive(Deserialize)]
struct WhatParams {
    state: String,
    commitment: Option<f64>,
}

async fn query_what(
    State(app): State<Arc<AppState>>,
    Params(p): Params<WhatParams>,
) -> ApiResult<Json<QueryResponse>> {
    let session = app.snapshot();
    let c = commitment(&session, p.commitment)?;
    let (_, state) = session.state(&p.state).map_err(ApiError::state)?;
    respond(&session, Explanation::What(what(session.indices(), &state, c)))
}

#[derive(Deserialize)]
struct HowParams {
    state: String,
    /// Defaults to the most strongly attributed desire.
    desire: Option<String>,
    commitment: Option<f64>,
    #[serde(default)]
    stochastic: bool,
    samples: Option<usize>,
    seed: Option<u64>,
    max_depth: Option<usize>,
}

async fn query_how(State(app): State<Arc<AppState>>, Params(p): Params<HowParams>) -> ApiResult<Json<QueryResponse>> {
    let session = app.snapshot();
    let c = commitment(&session, p.commitment)?;
    let (_, state) = session.state(&p.state).map_err(ApiError::state)?;
    let desire = match p.desire {
        Some(d) => d,
        None => what(session.indices(), &state, c)
            .attributions
            .into_iter()
            .next()
            .map(|a| a.desire)
            .ok_or_else(|| {
                ApiError::new(
                    StatusCode::UNPROCESSABLE_ENTITY,
                    "no_attribution",
                    format!("no desire is attributed to `{}` at commitment {}", p.state, c.value()),
                )
            })?,
    };
    let index = session
        .index(&desire)
        .ok_or_else(|| ApiError::not_found("unknown_desire", format!("no desire `{desire}` is registered")))?;
    let max_depth = p.max_depth.unwrap_or(DEFAULT_MAX_DEPTH);
    let answer = if p.stochastic {
        let samples = p.samples.unwrap_or(DEFAULT_SAMPLES);
        Explanation::HowStochastic(how_stochastic(index, &state, c, samples, max_depth, p.seed.unwrap_or(0))?)
    } else {
        Explanation::How(how(index, &state, max_depth)?)
    };
    respond(&session, answer)
}

#[derive(Deserialize)]
struct WhyParams {
    state: String,
    action: String,
    commitment: Option<f64>,
}

async fn query_why(State(app): State<Arc<AppState>>, Params(p): Params<WhyParams>) -> ApiResult<Json<QueryResponse>> {
    let session = app.snapshot();
    let c = commitment(&session, p.commitment)?;
    let (_, state) = session.state(&p.state).map_err(ApiError::state)?;
    respond(&session, Explanation::Why(why(session.indices(), &state, &p.action, c)?))
}

#[derive(Deserialize)]
struct MetricsParams {
    commitment: Option<f64>,
    /// Comma-separated thresholds for the trade-off curve.
    curve: Option<String>,
}

async fn metrics(State(app): State<Arc<AppState>>, Params(p): Params<MetricsParams>) -> ApiResult<Json<MetricsReport>> {
    let session = app.snapshot();
    let c = commitment(&session, p.commitment)?;
    let grid = p.curve.as_deref().map(parse_grid).transpose()?;
    Ok(Json(MetricsReport::build(
        session.graph(),
        session.indices(),
        c,
        grid.as_deref(),
    )?))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct EpisodeEntry {
    pub id: u64,
    pub steps: usize,
}

async fn episodes(State(app): State<Arc<AppState>>) -> Json<Vec<EpisodeEntry>> {
    Json(
        app.snapshot()
            .episodes()
            .values()
            .map(|e| EpisodeEntry {
                id: e.id,
                steps: e.len(),
            })
            .collect(),
    )
}

fn annotation(session: &Session, episode: u64, c: CommitmentThreshold) -> ApiResult<TimelineAnnotation> {
    let ep = session
        .episodes()
        .get(&episode)
        .ok_or_else(|| ApiError::not_found("unknown_episode", format!("no episode {episode} is loaded")))?;
    Ok(annotate(session.graph(), session.indices(), ep, c)?)
}

async fn timeline(
    State(app): State<Arc<AppState>>,
    Path(episode): Path<u64>,
    Params(p): Params<CommitmentParams>,
) -> ApiResult<Json<TimelineAnnotation>> {
    let session = app.snapshot();
    let c = commitment(&session, p.commitment)?;
    Ok(Json(annotation(&session, episode, c)?))
}

#[derive(Deserialize)]
struct RegionParams {
    commitment: Option<f64>,
    minlen: Option<usize>,
    grace: Option<usize>,
    stall: Option<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct RegionsResponse {
    pub episode: u64,
    pub commitment: f64,
    pub config: RegionConfig,
    pub regions: Vec<Region>,
}

async fn regions(
    State(app): State<Arc<AppState>>,
    Path(episode): Path<u64>,
    Params(p): Params<RegionParams>,
) -> ApiResult<Json<RegionsResponse>> {
    let session = app.snapshot();
    let c = commitment(&session, p.commitment)?;
    let defaults = RegionConfig::default();
    let config = RegionConfig {
        min_len: p.minlen.unwrap_or(defaults.min_len),
        grace: p.grace.unwrap_or(defaults.grace),
        stall_horizon: p.stall.unwrap_or(defaults.stall_horizon),
    };
    let ann = annotation(&session, episode, c)?;
    Ok(Json(RegionsResponse {
        episode,
        commitment: c.value(),
        config,
        regions: find_regions(&ann, c, config)?,
    }))
}
