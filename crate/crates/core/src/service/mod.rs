//! JSON HTTP API over the query engine and the feedback log.
//!
//! | method | path | body | success |
//! |---|---|---|---|
//! | POST | `/api/query` | `{query, k?, filter?}` | 200 [`StageOneResult`] |
//! | POST | `/api/chunks/{chunk_id}/respond` | `{query}` | 200 [`StageTwoResponse`] |
//! | GET | `/api/chunks/{chunk_id}/source` | | 200 [`SourceBundle`] |
//! | POST | `/api/feedback` | `{query, chunk_id, stage, rating}` | 201 [`FeedbackEvent`] |
//! | GET | `/api/suggestions` | | 200 `{suggestions}` |
//! | GET | `/api/health` | | 200 [`Health`] |
//!
//! Failures answer with an [`ApiError`] body.

mod error;
mod limit;

use std::collections::HashSet;
use std::future::Future;
use std::net::{IpAddr, Ipv4Addr, SocketAddr};
use std::path::Path;
use std::sync::Arc;

use axum::extract::rejection::{JsonRejection, PathRejection};
use axum::extract::{ConnectInfo, FromRequestParts, Path as UrlPath, State};
use axum::http::request::Parts;
use axum::http::{HeaderValue, Method, StatusCode};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use tower_http::cors::{AllowOrigin, Any, CorsLayer};
use tracing::{info, warn};

pub use error::ApiError;
pub use limit::RateLimiter;

use crate::config::{Config, ConfigError, ServerConfig};
use crate::feedback::{FeedbackError, FeedbackEvent, FeedbackLog, Rating, Stage};
use crate::index::SearchFilter;
use crate::query::{CorpusStats, QueryEngine, QueryError, SourceBundle, StageOneResult, StageTwoResponse};
use crate::store::DataDir;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QueryRequest {
    pub query: String,
    #[serde(default)]
    pub k: Option<usize>,
    #[serde(default)]
    pub filter: Option<SearchFilter>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RespondRequest {
    pub query: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeedbackRequest {
    pub query: String,
    pub chunk_id: String,
    pub stage: Stage,
    pub rating: Rating,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Suggestions {
    pub suggestions: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HealthStatus {
    Ok,
    /// Serving, but nothing is indexed yet.
    Degraded,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Health {
    pub status: HealthStatus,
    pub corpus: CorpusStats,
    /// Embedding model of the index.
    pub model: String,
    pub generation_model: String,
}

impl Health {
    pub fn of(engine: &QueryEngine) -> Self {
        let corpus = engine.stats();
        Health {
            status: if corpus.indexed == 0 {
                HealthStatus::Degraded
            } else {
                HealthStatus::Ok
            },
            corpus,
            model: engine.embedding_model().to_string(),
            generation_model: engine.generation_model().to_string(),
        }
    }
}

struct Loaded {
    engine: QueryEngine,
    feedback: Arc<FeedbackLog>,
}

struct Inner {
    loaded: Result<Loaded, String>,
    limiter: RateLimiter,
}

/// Shared, read-only service state.
#[derive(Clone)]
pub struct AppState {
    inner: Arc<Inner>,
}

impl AppState {
    pub fn new(engine: QueryEngine, feedback: FeedbackLog, rate_limit_per_min: u32) -> Self {
        Self::build(
            Ok(Loaded {
                engine,
                feedback: Arc::new(feedback),
            }),
            rate_limit_per_min,
        )
    }

    /// State for a data directory that could not be loaded; every endpoint
    /// answers 500 with `reason`.
    pub fn unavailable(reason: impl Into<String>) -> Self {
        Self::build(Err(reason.into()), 0)
    }

    fn build(loaded: Result<Loaded, String>, rate_limit_per_min: u32) -> Self {
        Self {
            inner: Arc::new(Inner {
                loaded,
                limiter: RateLimiter::new(rate_limit_per_min),
            }),
        }
    }

    /// Loads the engine and feedback log for `data_dir` with the backends
    /// named in `config`.
    pub fn open(data_dir: &Path, config: &Config) -> Result<Self, ServiceError> {
        let (engine, feedback) = open_data_dir(data_dir, config)?;
        Ok(Self::new(engine, feedback, config.server.rate_limit_per_min))
    }

    fn loaded(&self) -> Result<&Loaded, ApiError> {
        self.inner.loaded.as_ref().map_err(|reason| ApiError::unavailable(reason.clone()))
    }
}

/// Opens the query engine and the feedback log of a built data directory
/// with the backends named in `config`.
pub fn open_data_dir(data_dir: &Path, config: &Config) -> Result<(QueryEngine, FeedbackLog), ServiceError> {
    let dir = DataDir::open(data_dir).map_err(QueryError::from)?;
    let embedder = config.embedding_backend(&config.retrieval.embedding_backend, None)?;
    let generator = config.generation_backend(&config.retrieval.generation_backend)?;
    let engine = QueryEngine::open(
        &dir,
        embedder,
        generator,
        config.retrieval_settings(),
        config.suggestions.clone(),
    )?;
    let known: HashSet<String> = engine.corpus().chunks().iter().map(|c| c.chunk_id.clone()).collect();
    let feedback = FeedbackLog::open(dir.root(), Arc::new(known))?;
    Ok((engine, feedback))
}

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error(transparent)]
    Query(#[from] QueryError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Feedback(#[from] FeedbackError),
    #[error("cannot bind {addr}: {source}")]
    Bind { addr: String, source: std::io::Error },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Remote address when served with connect info, else unspecified.
struct ClientIp(IpAddr);

impl<S: Send + Sync> FromRequestParts<S> for ClientIp {
    type Rejection = std::convert::Infallible;

    async fn from_request_parts(parts: &mut Parts, _: &S) -> Result<Self, Self::Rejection> {
        let ip = parts
            .extensions
            .get::<ConnectInfo<SocketAddr>>()
            .map(|ConnectInfo(addr)| addr.ip())
            .unwrap_or(IpAddr::V4(Ipv4Addr::UNSPECIFIED));
        Ok(ClientIp(ip))
    }
}

type JsonBody<T> = Result<Json<T>, JsonRejection>;
type ChunkPath = Result<UrlPath<String>, PathRejection>;

async fn query(State(state): State<AppState>, body: JsonBody<QueryRequest>) -> Result<Json<StageOneResult>, ApiError> {
    let Json(req) = body?;
    let loaded = state.loaded()?;
    let filter = req.filter.unwrap_or_default();
    Ok(Json(loaded.engine.ask(&req.query, req.k, &filter).await?))
}

async fn respond(
    State(state): State<AppState>,
    ClientIp(client): ClientIp,
    path: ChunkPath,
    body: JsonBody<RespondRequest>,
) -> Result<Json<StageTwoResponse>, ApiError> {
    let UrlPath(chunk_id) = path?;
    let Json(req) = body?;
    let loaded = state.loaded()?;
    state.inner.limiter.check(client).map_err(ApiError::rate_limited)?;
    Ok(Json(loaded.engine.respond(&req.query, &chunk_id).await?))
}

async fn source(State(state): State<AppState>, path: ChunkPath) -> Result<Json<SourceBundle>, ApiError> {
    let UrlPath(chunk_id) = path?;
    Ok(Json(state.loaded()?.engine.get_source(&chunk_id)?))
}

async fn feedback(
    State(state): State<AppState>,
    body: JsonBody<FeedbackRequest>,
) -> Result<(StatusCode, Json<FeedbackEvent>), ApiError> {
    let Json(req) = body?;
    let log = state.loaded()?.feedback.clone();
    let event = tokio::task::spawn_blocking(move || log.record(&req.query, &req.chunk_id, req.stage, req.rating))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))??;
    Ok((StatusCode::CREATED, Json(event)))
}

async fn suggestions(State(state): State<AppState>) -> Result<Json<Suggestions>, ApiError> {
    Ok(Json(Suggestions {
        suggestions: state.loaded()?.engine.suggestions().to_vec(),
    }))
}

async fn health(State(state): State<AppState>) -> Result<Json<Health>, ApiError> {
    Ok(Json(Health::of(&state.loaded()?.engine)))
}

async fn not_found() -> ApiError {
    ApiError::new(StatusCode::NOT_FOUND, "not_found", "no such endpoint")
}

/// The API routes, without CORS.
pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/api/query", post(query))
        .route("/api/chunks/{chunk_id}/respond", post(respond))
        .route("/api/chunks/{chunk_id}/source", get(source))
        .route("/api/feedback", post(feedback))
        .route("/api/suggestions", get(suggestions))
        .route("/api/health", get(health))
        .fallback(not_found)
        .with_state(state)
}

pub fn cors_layer(origin: &str) -> CorsLayer {
    let layer = CorsLayer::new()
        .allow_methods([Method::GET, Method::POST])
        .allow_headers(Any);
    match origin.trim() {
        "*" => layer.allow_origin(Any),
        origin => match HeaderValue::from_str(origin) {
            Ok(value) => layer.allow_origin(AllowOrigin::exact(value)),
            Err(_) => {
                warn!(origin, "invalid CORS origin, cross-origin requests disabled");
                layer
            }
        },
    }
}

pub fn app(state: AppState, server: &ServerConfig) -> Router {
    router(state).layer(cors_layer(&server.cors_origin))
}

/// Binds `server.host:server.port` and serves until `shutdown` resolves.
pub async fn serve(
    state: AppState,
    server: &ServerConfig,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> Result<(), ServiceError> {
    let addr = format!("{}:{}", server.host, server.port);
    let listener = tokio::net::TcpListener::bind(&addr)
        .await
        .map_err(|source| ServiceError::Bind { addr: addr.clone(), source })?;
    info!(addr = %listener.local_addr()?, "listening");
    axum::serve(
        listener,
        app(state, server).into_make_service_with_connect_info::<SocketAddr>(),
    )
    .with_graceful_shutdown(shutdown)
    .await?;
    Ok(())
}
