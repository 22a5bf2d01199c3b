//! JSON service over a loaded [`Engine`].

use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use cellcast_core::prompting::{OperatorPreference, PromptError};
use serde::Deserialize;
use serde_json::json;

use crate::engine::{Engine, EngineError, TimeRange};

/// Environment variable holding the listen address.
pub const LISTEN_ENV: &str = "CELLCAST_LISTEN";
pub const DEFAULT_LISTEN: &str = "127.0.0.1:8080";

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictRequest {
    pub cell_id: u64,
    pub window_end_time: i64,
    pub preference: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateRequest {
    pub preference: String,
    #[serde(default)]
    pub time_range: Option<TimeRange>,
}

pub struct ApiError(StatusCode, serde_json::Value);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(self.1)).into_response()
    }
}

fn valid_phrases() -> Vec<&'static str> {
    OperatorPreference::ALL.iter().map(|p| p.phrase()).collect()
}

impl From<EngineError> for ApiError {
    fn from(e: EngineError) -> Self {
        let msg = e.to_string();
        match e {
            EngineError::UnknownPreference(PromptError::UnknownPreference { given, .. }) => {
                ApiError(
                    StatusCode::BAD_REQUEST,
                    json!({
                        "error": format!("unknown preference {given:?}"),
                        "valid_preferences": valid_phrases(),
                    }),
                )
            }
            EngineError::NoWindow { .. } => {
                ApiError(StatusCode::NOT_FOUND, json!({ "error": msg }))
            }
            EngineError::BadRange | EngineError::EmptyRange => {
                ApiError(StatusCode::BAD_REQUEST, json!({ "error": msg }))
            }
            _ => ApiError(StatusCode::INTERNAL_SERVER_ERROR, json!({ "error": msg })),
        }
    }
}

impl From<JsonRejection> for ApiError {
    fn from(r: JsonRejection) -> Self {
        ApiError(StatusCode::BAD_REQUEST, json!({ "error": r.body_text() }))
    }
}

type Shared = Arc<Engine>;

async fn health() -> Json<serde_json::Value> {
    Json(json!({
        "status": "ok",
        "name": env!("CARGO_PKG_NAME"),
        "version": env!("CARGO_PKG_VERSION"),
    }))
}

async fn preferences(State(engine): State<Shared>) -> Json<serde_json::Value> {
    Json(json!({
        "orientation": engine.orientation,
        "preferences": engine.preferences(),
    }))
}

async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> Result<T, EngineError> + Send + 'static,
) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| {
            ApiError(
                StatusCode::INTERNAL_SERVER_ERROR,
                json!({ "error": e.to_string() }),
            )
        })?
        .map_err(ApiError::from)
}

async fn predict(
    State(engine): State<Shared>,
    body: Result<Json<PredictRequest>, JsonRejection>,
) -> Result<Response, ApiError> {
    let Json(req) = body?;
    let pref = Engine::parse_preference(&req.preference)?;
    let out = blocking(move || engine.predict(req.cell_id, req.window_end_time, pref)).await?;
    Ok(Json(out).into_response())
}

async fn simulate(
    State(engine): State<Shared>,
    body: Result<Json<SimulateRequest>, JsonRejection>,
) -> Result<Response, ApiError> {
    let Json(req) = body?;
    let pref = Engine::parse_preference(&req.preference)?;
    let out = blocking(move || engine.summary(pref, req.time_range)).await?;
    Ok(Json(out).into_response())
}

pub fn router(engine: Arc<Engine>) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/preferences", get(preferences))
        .route("/predict", post(predict))
        .route("/simulate", post(simulate))
        .with_state(engine)
}

pub fn listen_address() -> String {
    std::env::var(LISTEN_ENV).unwrap_or_else(|_| DEFAULT_LISTEN.to_string())
}

pub async fn serve(engine: Engine, addr: &str) -> anyhow::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    eprintln!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(Arc::new(engine)))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
