//! HTTP API over frozen checkpoints: health, class list, generation from a
//! label and generation from an uploaded texture image.

mod api;
mod state;

use std::future::Future;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::DefaultBodyLimit;
use axum::http::{header, HeaderValue, Method};
use axum::middleware::{self, Next};
use axum::response::Response;
use axum::routing::{get, post};
use axum::Router;
use serde::{Deserialize, Serialize};
use texvib_core::codec::DEFAULT_GRIFFIN_LIM_ITERS;
use texvib_core::Result;
use tokio::net::TcpListener;

pub use api::{ApiError, ClassesResponse, GenerateRequest, GenerateResponse, HealthResponse, ImageResponse, API_SCHEMA};
pub use state::AppState;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServiceConfig {
    pub bind: SocketAddr,
    pub gan: PathBuf,
    /// Without an encoder, `/generate-from-image` answers 503.
    pub encoder: Option<PathBuf>,
    pub griffin_lim_iters: usize,
    /// Requests may ask for at most this many Griffin-Lim iterations.
    pub max_griffin_lim_iters: usize,
    pub max_upload_bytes: usize,
    pub cors_allow_origin: Option<String>,
    /// Label encoding for uploaded images ("soft" or "hard").
    pub label_encoding: String,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            bind: SocketAddr::from(([127, 0, 0, 1], 8080)),
            gan: PathBuf::from("gan.tnn"),
            encoder: None,
            griffin_lim_iters: DEFAULT_GRIFFIN_LIM_ITERS,
            max_griffin_lim_iters: 500,
            max_upload_bytes: 8 << 20,
            cors_allow_origin: None,
            label_encoding: "soft".into(),
        }
    }
}

/// Builds the application router over an already-loaded state.
pub fn router(state: Arc<AppState>) -> Router {
    let limit = state.limits.max_upload_bytes;
    let cors = state.limits.cors_allow_origin.clone();
    let app = Router::new()
        .route("/health", get(api::health))
        .route("/classes", get(api::classes))
        .route("/generate", post(api::generate))
        .route("/generate-from-image", post(api::generate_from_image))
        .fallback(api::not_found)
        .layer(DefaultBodyLimit::max(limit))
        .with_state(state);
    match cors.and_then(|o| HeaderValue::from_str(&o).ok()) {
        Some(origin) => app.layer(middleware::from_fn(move |req, next| cors_layer(origin.clone(), req, next))),
        None => app,
    }
}

async fn cors_layer(origin: HeaderValue, req: axum::extract::Request, next: Next) -> Response {
    let preflight = req.method() == Method::OPTIONS;
    let mut resp = if preflight {
        Response::new(axum::body::Body::empty())
    } else {
        next.run(req).await
    };
    let h = resp.headers_mut();
    h.insert(header::ACCESS_CONTROL_ALLOW_ORIGIN, origin);
    h.insert(header::ACCESS_CONTROL_ALLOW_METHODS, HeaderValue::from_static("GET, POST, OPTIONS"));
    h.insert(header::ACCESS_CONTROL_ALLOW_HEADERS, HeaderValue::from_static("content-type"));
    resp
}

/// Loads and cross-checks the checkpoints, binds, and serves until
/// `shutdown` resolves. Returns before binding if the checkpoints disagree.
pub async fn serve(cfg: ServiceConfig, shutdown: impl Future<Output = ()> + Send + 'static) -> Result<()> {
    let state = Arc::new(AppState::load(&cfg)?);
    let listener = TcpListener::bind(cfg.bind).await?;
    tracing::info!(addr = %listener.local_addr()?, classes = state.gan.class_names.len(), "serving");
    axum::serve(listener, router(state)).with_graceful_shutdown(shutdown).await?;
    Ok(())
}
