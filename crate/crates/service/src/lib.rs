//! HTTP JSON inference over a trained model bundle.
//!
//! | Method | Path           | Body                       |
//! |--------|----------------|----------------------------|
//! | POST   | `/api/predict` | `{"text": "..."}`          |
//! | GET    | `/api/health`  |                            |
//! | GET    | `/api/model`   |                            |
//!
//! Errors are `{"error": {"code": ..., "message": ...}}` with a 4xx or 5xx
//! status. The bundle is loaded once and shared read-only by all requests.

use std::future::Future;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use axum::body::Bytes;
use axum::extract::{Request, State};
use axum::http::{HeaderValue, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Serialize;
use serde_json::json;
use tokio::net::TcpListener;
use tower_http::cors::{AllowOrigin, CorsLayer};
use tower_http::services::ServeDir;

use ekmanlab::modelstore::{self, BundleHeader, ModelBundle};
use ekmanlab::pipeline::{predict_response, EmojiTable, PredictResponse};

pub const MAX_TEXT_CHARS: usize = 10_000;
pub const DEFAULT_PORT: u16 = 8080;

#[derive(Debug, Clone, Default)]
pub struct ServiceConfig {
    /// Allowed CORS origins; empty allows any origin.
    pub cors_origins: Vec<String>,
    /// Static files served under `/ui`.
    pub ui_dir: Option<PathBuf>,
    pub emoji: EmojiTable,
    /// Print one line per request to stdout.
    pub access_log: bool,
}

struct Shared {
    bundle: ModelBundle,
    header: BundleHeader,
    emoji: EmojiTable,
    started: Instant,
}

#[derive(Clone)]
pub struct AppState(Arc<Shared>);

impl AppState {
    pub fn new(bundle: ModelBundle, emoji: EmojiTable) -> ekmanlab::Result<Self> {
        let header = bundle.header()?;
        Ok(AppState(Arc::new(Shared {
            bundle,
            header,
            emoji,
            started: Instant::now(),
        })))
    }

    pub fn load(path: &Path, emoji: EmojiTable) -> ekmanlab::Result<Self> {
        Self::new(modelstore::load(path)?, emoji)
    }

    pub fn bundle(&self) -> &ModelBundle {
        &self.0.bundle
    }
}

#[derive(Debug, Serialize)]
pub struct ErrorBody {
    pub code: &'static str,
    pub message: String,
}

pub struct ApiError {
    status: StatusCode,
    body: ErrorBody,
}

impl ApiError {
    fn bad_request(code: &'static str, message: impl Into<String>) -> Self {
        ApiError {
            status: StatusCode::BAD_REQUEST,
            body: ErrorBody {
                code,
                message: message.into(),
            },
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self.body }))).into_response()
    }
}

/// Extracts `text` from a request body, enforcing the error contract.
pub fn parse_predict_body(body: &[u8]) -> Result<String, ApiError> {
    let value: serde_json::Value = serde_json::from_slice(body)
        .map_err(|e| ApiError::bad_request("invalid_json", format!("request body is not JSON: {e}")))?;
    let text = match value.get("text") {
        None | Some(serde_json::Value::Null) => {
            return Err(ApiError::bad_request(
                "missing_field",
                "request needs a string field \"text\"",
            ))
        }
        Some(serde_json::Value::String(s)) => s.clone(),
        Some(_) => return Err(ApiError::bad_request("invalid_field", "\"text\" must be a string")),
    };
    let n = text.chars().count();
    if n > MAX_TEXT_CHARS {
        return Err(ApiError::bad_request(
            "text_too_long",
            format!("text has {n} characters, the limit is {MAX_TEXT_CHARS}"),
        ));
    }
    Ok(text)
}

async fn predict(State(state): State<AppState>, body: Bytes) -> Result<Json<PredictResponse>, ApiError> {
    let text = parse_predict_body(&body)?;
    let worker = state.clone();
    let result = tokio::task::spawn_blocking(move || predict_response(&worker.0.bundle, &text, &worker.0.emoji))
        .await
        .map_err(|e| internal(e.to_string()))?;
    result.map(Json).map_err(|e| internal(e.to_string()))
}

fn internal(message: String) -> ApiError {
    ApiError {
        status: StatusCode::INTERNAL_SERVER_ERROR,
        body: ErrorBody {
            code: "internal",
            message,
        },
    }
}

async fn health(State(state): State<AppState>) -> Json<serde_json::Value> {
    Json(json!({
        "status": "ok",
        "model_name": state.0.header.metadata.model_name,
        "uptime_s": state.0.started.elapsed().as_secs_f64(),
    }))
}

async fn model_info(State(state): State<AppState>) -> Json<BundleHeader> {
    Json(state.0.header.clone())
}

async fn not_found() -> ApiError {
    ApiError {
        status: StatusCode::NOT_FOUND,
        body: ErrorBody {
            code: "not_found",
            message: "no such endpoint".into(),
        },
    }
}

async fn access_log(req: Request, next: Next) -> Response {
    let start = Instant::now();
    let line = format!("{} {}", req.method(), req.uri().path());
    let res = next.run(req).await;
    println!(
        "{line} {} {:.1}ms",
        res.status().as_u16(),
        start.elapsed().as_secs_f64() * 1000.0
    );
    res
}

fn cors(origins: &[String]) -> CorsLayer {
    let allow = if origins.is_empty() {
        AllowOrigin::any()
    } else {
        AllowOrigin::list(origins.iter().filter_map(|o| HeaderValue::from_str(o).ok()))
    };
    CorsLayer::new()
        .allow_origin(allow)
        .allow_methods([axum::http::Method::GET, axum::http::Method::POST])
        .allow_headers([axum::http::header::CONTENT_TYPE])
}

pub fn router(state: AppState, config: &ServiceConfig) -> Router {
    let mut app = Router::new()
        .route("/api/predict", post(predict))
        .route("/api/health", get(health))
        .route("/api/model", get(model_info));
    if let Some(dir) = &config.ui_dir {
        app = app.nest_service("/ui", ServeDir::new(dir));
    }
    let mut app = app
        .fallback(not_found)
        .with_state(state)
        .layer(cors(&config.cors_origins));
    if config.access_log {
        app = app.layer(middleware::from_fn(access_log));
    }
    app
}

/// Serves until `shutdown` resolves, then drains in-flight requests.
pub async fn run(
    listener: TcpListener,
    state: AppState,
    config: &ServiceConfig,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router(state, config))
        .with_graceful_shutdown(shutdown)
        .await
}

/// Loads the bundle, binds `0.0.0.0:port` and serves until Ctrl-C.
pub async fn serve(bundle_path: &Path, port: u16, config: ServiceConfig) -> Result<(), String> {
    let state = AppState::load(bundle_path, config.emoji.clone()).map_err(|e| e.to_string())?;
    let addr = SocketAddr::from(([0, 0, 0, 0], port));
    let listener = TcpListener::bind(addr)
        .await
        .map_err(|e| format!("cannot bind {addr}: {e}"))?;
    println!(
        "serving {} on http://{}",
        state.0.header.metadata.model_name,
        listener.local_addr().map_err(|e| e.to_string())?
    );
    run(listener, state, &config, async {
        let _ = tokio::signal::ctrl_c().await;
    })
    .await
    .map_err(|e| e.to_string())
}
