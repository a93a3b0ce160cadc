//! HTTP service for synthesis, previews and domain listing.
//!
//! Every response carries `X-API-Version: 1`. Errors are JSON objects with a
//! machine-readable `code` and a human `message`.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::{Arc, RwLock};
use std::time::Instant;

use axum::body::Bytes;
use axum::extract::{Request, State};
use axum::http::{HeaderValue, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use log::{info, warn};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::json;

use nl2dsl::domains::{DomainAssets, Preview};
use nl2dsl::dsl::parse_program;
use nl2dsl::nlp::{Analyzer, BuiltinAnalyzer};
use nl2dsl::synth::{word_mappings, WordMapping};
use nl2dsl::training::{train_all, ModelBundle, TrainConfig, Translator};
use nl2dsl::Error;

pub const API_VERSION: &str = "1";

/// A domain with its trained models, if any.
pub struct Loaded {
    pub assets: DomainAssets,
    pub translator: Option<Translator>,
}

/// Shared server state. Each domain sits behind its own snapshot pointer,
/// so retraining replaces a domain atomically while requests in flight keep
/// the version they started with.
pub struct AppState {
    domains: BTreeMap<String, RwLock<Arc<Loaded>>>,
    analyzer: BuiltinAnalyzer,
    models_dir: Option<PathBuf>,
    train_config: TrainConfig,
    capacity: usize,
}

impl AppState {
    /// `bundles` maps domain names to bundle text; bundles that do not match
    /// their domain are reported and ignored.
    pub fn new(domains: BTreeMap<String, DomainAssets>, bundles: &BTreeMap<String, String>) -> AppState {
        let domains = domains
            .into_iter()
            .map(|(name, assets)| {
                let translator = bundles.get(&name).and_then(|text| {
                    ModelBundle::load(text, &assets.grammar, &assets.dictionary)
                        .and_then(|b| Translator::from_bundle(&b, &assets.grammar, &assets.dictionary))
                        .map_err(|e| warn!("ignoring bundle for {name}: {e}"))
                        .ok()
                });
                (name, RwLock::new(Arc::new(Loaded { assets, translator })))
            })
            .collect();
        AppState {
            domains,
            analyzer: BuiltinAnalyzer::new(),
            models_dir: None,
            train_config: TrainConfig::default(),
            capacity: nl2dsl::synth::DEFAULT_CAPACITY,
        }
    }

    /// Directory where `/api/train` writes `<domain>.json` bundles.
    pub fn with_models_dir(mut self, dir: PathBuf) -> Self {
        self.models_dir = Some(dir);
        self
    }

    pub fn with_train_config(mut self, cfg: TrainConfig) -> Self {
        self.train_config = cfg;
        self
    }

    /// Bag capacity per request; larger candidate sets are refused with 413.
    pub fn with_capacity(mut self, cap: usize) -> Self {
        self.capacity = cap;
        self
    }

    fn get(&self, name: &str) -> Result<Arc<Loaded>, ApiError> {
        self.domains
            .get(name)
            .map(|slot| slot.read().expect("snapshot lock").clone())
            .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "unknown_domain", format!("no domain named `{name}`")))
    }
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
    extra: Option<(&'static str, serde_json::Value)>,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            code,
            message: message.into(),
            extra: None,
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let mut body = json!({ "code": self.code, "message": self.message });
        if let Some((k, v)) = self.extra {
            body[k] = v;
        }
        (self.status, Json(body)).into_response()
    }
}

fn synthesis_error(e: Error) -> ApiError {
    match e {
        Error::CapacityExceeded { cap } => ApiError {
            extra: Some(("cap", json!(cap))),
            ..ApiError::new(StatusCode::PAYLOAD_TOO_LARGE, "capacity_exceeded", e.to_string())
        },
        Error::SentenceTooLong(_) => ApiError::new(StatusCode::PAYLOAD_TOO_LARGE, "sentence_too_long", e.to_string()),
        Error::EmptyInput => ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "empty_sentence", e.to_string()),
        other => ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", other.to_string()),
    }
}

fn parse_body<T: DeserializeOwned>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "bad_request", e.to_string()))
}

fn default_max_results() -> usize {
    10
}

#[derive(Debug, Deserialize)]
pub struct SynthesisRequest {
    pub domain: String,
    pub sentence: String,
    #[serde(default = "default_max_results")]
    pub max_results: usize,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct CandidateView {
    pub program_text: String,
    pub rank: usize,
    pub combined: f64,
    pub cov: f64,
    pub map: f64,
    pub str: f64,
    pub word_mappings: Vec<WordMappingView>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct WordMappingView {
    pub position: usize,
    pub word: String,
    pub terminal: String,
}

impl From<WordMapping> for WordMappingView {
    fn from(m: WordMapping) -> Self {
        WordMappingView {
            position: m.position,
            word: m.word,
            terminal: m.terminal,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SynthesisResponse {
    pub candidates: Vec<CandidateView>,
    pub elapsed_ms: f64,
}

async fn synthesize(State(state): State<Arc<AppState>>, body: Bytes) -> Result<Json<SynthesisResponse>, ApiError> {
    let req: SynthesisRequest = parse_body(&body)?;
    let loaded = state.get(&req.domain)?;
    if req.sentence.trim().is_empty() {
        return Err(ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "empty_sentence", "sentence is empty"));
    }
    let translator = loaded.translator.as_ref().ok_or_else(|| {
        ApiError::new(
            StatusCode::SERVICE_UNAVAILABLE,
            "untrained_domain",
            format!("domain `{}` has no trained models", req.domain),
        )
    })?;
    let start = Instant::now();
    let analysis = state.analyzer.analyze(&req.sentence).map_err(synthesis_error)?;
    let ranked = translator
        .translate_with_capacity(&loaded.assets.grammar, &analysis, state.capacity)
        .map_err(synthesis_error)?;
    let candidates = ranked
        .into_iter()
        .take(req.max_results)
        .map(|c| CandidateView {
            word_mappings: word_mappings(&c.program, &c.map, &analysis.sentence)
                .into_iter()
                .map(Into::into)
                .collect(),
            program_text: c.text,
            rank: c.rank,
            combined: c.combined,
            cov: c.cov,
            map: c.map_score,
            str: c.str_score,
        })
        .collect();
    Ok(Json(SynthesisResponse {
        candidates,
        elapsed_ms: start.elapsed().as_secs_f64() * 1000.0,
    }))
}

#[derive(Debug, Deserialize)]
pub struct PreviewRequest {
    pub domain: String,
    pub program_text: String,
    #[serde(default)]
    pub document: String,
}

async fn preview(State(state): State<Arc<AppState>>, body: Bytes) -> Result<Json<serde_json::Value>, ApiError> {
    let req: PreviewRequest = parse_body(&body)?;
    let loaded = state.get(&req.domain)?;
    let g = &loaded.assets.grammar;
    let program = parse_program(g, &req.program_text)
        .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "parse_error", e.to_string()))?;
    if !nl2dsl::dsl::accepts(g, &program) {
        return Err(ApiError::new(
            StatusCode::BAD_REQUEST,
            "parse_error",
            format!("`{program}` is not a complete program of `{}`", req.domain),
        ));
    }
    match loaded.assets.preview(&program, &req.document) {
        Ok(Preview::Document(d)) => Ok(Json(json!({ "result_document": d }))),
        Ok(Preview::Description(d)) => Ok(Json(json!({ "rendered_description": d }))),
        Err(Error::Unsupported(t)) => Err(ApiError::new(
            StatusCode::UNPROCESSABLE_ENTITY,
            "unsupported_construct",
            format!("unsupported construct `{t}`"),
        )),
        Err(e) => Err(ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string())),
    }
}

#[derive(Debug, Serialize, Deserialize, PartialEq, Eq)]
pub struct DomainInfo {
    pub name: String,
    pub trained: bool,
    pub corpus_size: usize,
}

async fn domains(State(state): State<Arc<AppState>>) -> Json<Vec<DomainInfo>> {
    Json(
        state
            .domains
            .keys()
            .filter_map(|name| state.get(name).ok().map(|l| (name, l)))
            .map(|(name, l)| DomainInfo {
                name: name.clone(),
                trained: l.translator.is_some(),
                corpus_size: l.assets.corpus.len(),
            })
            .collect(),
    )
}

#[derive(Debug, Deserialize)]
pub struct TrainRequest {
    pub domain: String,
}

async fn train(State(state): State<Arc<AppState>>, body: Bytes) -> Result<Json<serde_json::Value>, ApiError> {
    let req: TrainRequest = parse_body(&body)?;
    let loaded = state.get(&req.domain)?;
    let cfg = state.train_config;
    let name = req.domain.clone();
    let worker = loaded.clone();
    let (bundle, report) = tokio::task::spawn_blocking(move || {
        let a = &worker.assets;
        train_all(&name, &a.grammar, &a.dictionary, &a.corpus, &cfg)
    })
    .await
    .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))?
    .map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "training_failed", e.to_string()))?;
    let a = &loaded.assets;
    let translator = Translator::from_bundle(&bundle, &a.grammar, &a.dictionary)
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))?;
    if let Some(dir) = &state.models_dir {
        let path = dir.join(format!("{}.json", req.domain));
        std::fs::create_dir_all(dir)
            .and_then(|_| std::fs::write(&path, bundle.save()))
            .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "io", format!("{}: {e}", path.display())))?;
    }
    let fresh = Arc::new(Loaded {
        assets: loaded.assets.clone(),
        translator: Some(translator),
    });
    *state.domains[&req.domain].write().expect("snapshot lock") = fresh;
    info!("trained {}", req.domain);
    Ok(Json(json!({
        "domain": req.domain,
        "pairs": report.pairs,
        "skipped": report.skipped.len(),
        "weights": bundle.weights,
        "top1": report.fit.as_ref().map(|f| f.top1),
    })))
}

async fn not_found() -> ApiError {
    ApiError::new(StatusCode::NOT_FOUND, "not_found", "no such endpoint")
}

async fn version_and_log(req: Request, next: Next) -> Response {
    let method = req.method().clone();
    let path = req.uri().path().to_string();
    let start = Instant::now();
    let mut res = next.run(req).await;
    res.headers_mut().insert("x-api-version", HeaderValue::from_static(API_VERSION));
    info!(
        "method={method} path={path} status={} elapsed_ms={:.1}",
        res.status().as_u16(),
        start.elapsed().as_secs_f64() * 1000.0
    );
    res
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/api/synthesize", post(synthesize))
        .route("/api/preview", post(preview))
        .route("/api/domains", get(domains))
        .route("/api/train", post(train))
        .fallback(not_found)
        .with_state(state)
        .layer(middleware::from_fn(version_and_log))
}

/// Binds and serves until the process is stopped.
pub async fn serve(state: Arc<AppState>, addr: &str) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state)).await
}
