//! Read-only JSON API over a validated experiment corpus, with re-rating
//! under client-supplied scheme overrides.
//!
//! | route | response |
//! |---|---|
//! | `GET /api/experiments` | `[{id, task, dataset, method, environment}]` |
//! | `GET /api/scheme` | summary of the default scheme |
//! | `POST /api/rate` | report bundle for the default scheme merged with the body |
//! | `GET /api/label/{id}?scheme_hash=…` | SVG label under a previously computed scheme |
//!
//! Bundles are cached by scheme hash. Every response is a deterministic
//! function of the corpus and the scheme.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use effindex::labels::{render_label, LabelSpec};
use effindex::pipeline::{rate_records, rate_with_scheme, PipelineError, RatingRun};
use effindex::rating::{FieldError, RatingError, SchemeSpec};
use effindex::report::to_canonical_json;
use effindex::{ExperimentRecord, GroupKey, MetricRegistry};
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tower_http::cors::{AllowOrigin, Any, CorsLayer};
use tower_http::services::ServeDir;

/// Distinct schemes kept before the cache is flushed.
pub const CACHE_CAPACITY: usize = 256;

#[derive(Debug, Error)]
pub enum ServerError {
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("default scheme: {0}")]
    Scheme(#[from] PipelineError),
    #[error("invalid CORS origin `{0}`")]
    Origin(String),
    #[error("cannot bind {addr}: {source}")]
    Bind {
        addr: SocketAddr,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub id: String,
    pub task: String,
    pub dataset: String,
    pub method: String,
    pub environment: String,
}

impl From<&ExperimentRecord> for ExperimentSummary {
    fn from(r: &ExperimentRecord) -> Self {
        Self {
            id: r.id.clone(),
            task: r.configuration.task.clone(),
            dataset: r.configuration.dataset.clone(),
            method: r.configuration.method.clone(),
            environment: r.environment.id.clone(),
        }
    }
}

/// Corpus, default scheme and the bundle cache.
#[derive(Debug)]
pub struct AppState {
    records: Vec<ExperimentRecord>,
    registry: MetricRegistry,
    default_spec: SchemeSpec,
    default_hash: String,
    cache: Mutex<HashMap<String, Arc<RatingRun>>>,
}

impl AppState {
    /// Validates that the corpus is non-empty and rates it once under the
    /// default scheme.
    pub fn new(
        records: Vec<ExperimentRecord>,
        registry: MetricRegistry,
        default_spec: SchemeSpec,
    ) -> Result<Self, ServerError> {
        if records.is_empty() {
            return Err(ServerError::EmptyCorpus);
        }
        let run = rate_records(&records, &registry, &default_spec)?;
        let default_hash = run.scheme.hash();
        let cache = HashMap::from([(default_hash.clone(), Arc::new(run))]);
        Ok(Self {
            records,
            registry,
            default_spec,
            default_hash,
            cache: Mutex::new(cache),
        })
    }

    pub fn records(&self) -> &[ExperimentRecord] {
        &self.records
    }

    pub fn default_hash(&self) -> &str {
        &self.default_hash
    }

    pub fn default_run(&self) -> Arc<RatingRun> {
        self.cached(&self.default_hash).expect("default run is never evicted")
    }

    pub fn cached(&self, hash: &str) -> Option<Arc<RatingRun>> {
        self.cache.lock().expect("cache lock").get(hash).cloned()
    }

    /// Rates the corpus under the default scheme merged with `overrides`.
    pub fn rate(&self, overrides: &SchemeSpec) -> Result<Arc<RatingRun>, PipelineError> {
        let spec = self.default_spec.merged(overrides);
        let scheme = spec.build(&self.registry, &self.records)?;
        let hash = scheme.hash();
        if let Some(run) = self.cached(&hash) {
            return Ok(run);
        }
        let run = Arc::new(rate_with_scheme(&self.records, scheme)?);
        let mut cache = self.cache.lock().expect("cache lock");
        if cache.len() >= CACHE_CAPACITY {
            cache.retain(|k, _| *k == self.default_hash);
        }
        Ok(cache.entry(hash).or_insert(run).clone())
    }
}

#[derive(Debug, Clone, Default)]
pub struct RouterOptions {
    /// Allowed CORS origins; empty allows any origin.
    pub cors_origins: Vec<String>,
    /// Directory of built explorer assets served at `/`.
    pub static_dir: Option<PathBuf>,
}

pub fn router(state: Arc<AppState>, options: &RouterOptions) -> Result<Router, ServerError> {
    let cors = if options.cors_origins.is_empty() {
        CorsLayer::new().allow_origin(Any)
    } else {
        let origins = options
            .cors_origins
            .iter()
            .map(|o| HeaderValue::from_str(o).map_err(|_| ServerError::Origin(o.clone())))
            .collect::<Result<Vec<_>, _>>()?;
        CorsLayer::new().allow_origin(AllowOrigin::list(origins))
    }
    .allow_methods([axum::http::Method::GET, axum::http::Method::POST])
    .allow_headers([header::CONTENT_TYPE]);

    let mut app = Router::new()
        .route("/api/experiments", get(experiments))
        .route("/api/scheme", get(scheme))
        .route("/api/rate", post(rate))
        .route("/api/label/{id}", get(label))
        .with_state(state);
    if let Some(dir) = options.static_dir.as_ref().filter(|d| d.is_dir()) {
        app = app.fallback_service(ServeDir::new(dir));
    }
    Ok(app.layer(cors))
}

/// Binds `addr` and serves until Ctrl-C.
pub async fn serve(addr: SocketAddr, app: Router) -> Result<(), ServerError> {
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .map_err(|source| ServerError::Bind { addr, source })?;
    log::info!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}

#[derive(Debug, Serialize)]
struct ErrorBody {
    error: String,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    fields: Vec<FieldError>,
    #[serde(skip_serializing_if = "Option::is_none")]
    group: Option<GroupKey>,
}

fn error(status: StatusCode, message: impl ToString) -> Response {
    let body = ErrorBody {
        error: message.to_string(),
        fields: Vec::new(),
        group: None,
    };
    (status, Json(body)).into_response()
}

fn pipeline_error(e: PipelineError) -> Response {
    let message = e.to_string();
    let (status, fields, group) = match e {
        PipelineError::Rating(RatingError::InvalidScheme(fields)) => {
            (StatusCode::BAD_REQUEST, fields, None)
        }
        PipelineError::Rating(RatingError::MissingReference(key)) => {
            (StatusCode::UNPROCESSABLE_ENTITY, Vec::new(), Some(*key))
        }
        PipelineError::Rating(_) => (StatusCode::UNPROCESSABLE_ENTITY, Vec::new(), None),
        PipelineError::Report(_) => (StatusCode::INTERNAL_SERVER_ERROR, Vec::new(), None),
    };
    let body = ErrorBody {
        error: message,
        fields,
        group,
    };
    (status, Json(body)).into_response()
}

fn json_bytes(text: String) -> Response {
    ([(header::CONTENT_TYPE, "application/json")], text).into_response()
}

async fn experiments(State(state): State<Arc<AppState>>) -> Json<Vec<ExperimentSummary>> {
    Json(state.records().iter().map(ExperimentSummary::from).collect())
}

async fn scheme(State(state): State<Arc<AppState>>) -> Json<effindex::rating::SchemeSummary> {
    Json(state.default_run().scheme.summary())
}

async fn rate(State(state): State<Arc<AppState>>, body: Bytes) -> Response {
    let overrides: SchemeSpec = if body.iter().all(u8::is_ascii_whitespace) {
        SchemeSpec::default()
    } else {
        match serde_json::from_slice(&body) {
            Ok(spec) => spec,
            Err(e) => return error(StatusCode::BAD_REQUEST, format!("invalid request body: {e}")),
        }
    };
    match state.rate(&overrides) {
        Ok(run) => json_bytes(to_canonical_json(&run.bundle)),
        Err(e) => pipeline_error(e),
    }
}

#[derive(Debug, Deserialize)]
struct LabelQuery {
    scheme_hash: Option<String>,
}

async fn label(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    Query(query): Query<LabelQuery>,
) -> Response {
    let hash = query.scheme_hash.as_deref().unwrap_or(state.default_hash());
    let Some(run) = state.cached(hash) else {
        return error(StatusCode::NOT_FOUND, format!("unknown scheme hash `{hash}`"));
    };
    let Some(rated) = run.bundle.experiments.iter().find(|r| r.id() == id) else {
        return error(StatusCode::NOT_FOUND, format!("unknown experiment `{id}`"));
    };
    match render_label(&LabelSpec::new(rated.clone(), run.scheme.registry())) {
        Ok(svg) => ([(header::CONTENT_TYPE, "image/svg+xml")], svg).into_response(),
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, e),
    }
}
