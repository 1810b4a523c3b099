//! HTTP routes.
//!
//! | method | path                          | body / query             |
//! |--------|-------------------------------|--------------------------|
//! | POST   | `/experiments`                | [`CreateExperiment`]     |
//! | GET    | `/experiments`                |                          |
//! | GET    | `/experiments/{id}`           |                          |
//! | GET    | `/experiments/{id}/batch`     | `annotator`, `max`       |
//! | POST   | `/experiments/{id}/votes`     | [`VoteRequest`]          |
//! | GET    | `/experiments/{id}/estimate`  |                          |
//! | GET    | `/experiments/{id}/export`    |                          |
//! | GET    | `/health`                     |                          |
//!
//! Every error is a JSON object `{"error": kind, "message": text}`.

use std::future::Future;
use std::sync::Arc;

use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::json;
use tokio::net::TcpListener;

use crate::engine::{CreateExperiment, Engine};
use crate::error::{Result, ServiceError};
use crate::record::VoteRequest;

type Shared = Arc<Engine>;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct BatchQuery {
    annotator: String,
    #[serde(default)]
    max: Option<usize>,
}

/// Runs blocking engine work (locks, fsync, refits) off the async workers.
async fn blocking<T: Send + 'static>(
    engine: Shared,
    f: impl FnOnce(&Engine) -> Result<T> + Send + 'static,
) -> Result<T> {
    tokio::task::spawn_blocking(move || f(&engine))
        .await
        .map_err(|e| ServiceError::Corrupt(format!("worker task failed: {e}")))?
}

fn body<T>(parsed: std::result::Result<Json<T>, JsonRejection>) -> Result<T> {
    parsed
        .map(|Json(v)| v)
        .map_err(|e| ServiceError::invalid(e.body_text()))
}

async fn create(
    State(engine): State<Shared>,
    req: std::result::Result<Json<CreateExperiment>, JsonRejection>,
) -> Result<Response> {
    let req = body(req)?;
    let view = blocking(engine, move |e| e.create(req)).await?;
    Ok((StatusCode::CREATED, Json(view)).into_response())
}

async fn list(State(engine): State<Shared>) -> Result<Response> {
    let views = blocking(engine, |e| {
        e.ids().iter().map(|id| e.experiment(id)).collect::<Result<Vec<_>>>()
    })
    .await?;
    Ok(Json(views).into_response())
}

async fn show(State(engine): State<Shared>, Path(id): Path<String>) -> Result<Response> {
    Ok(Json(blocking(engine, move |e| e.experiment(&id)).await?).into_response())
}

async fn batch(
    State(engine): State<Shared>,
    Path(id): Path<String>,
    q: std::result::Result<Query<BatchQuery>, QueryRejection>,
) -> Result<Response> {
    let Query(q) = q.map_err(|e| ServiceError::invalid(e.body_text()))?;
    Ok(Json(blocking(engine, move |e| e.batch(&id, &q.annotator, q.max)).await?).into_response())
}

async fn vote(
    State(engine): State<Shared>,
    Path(id): Path<String>,
    req: std::result::Result<Json<VoteRequest>, JsonRejection>,
) -> Result<Response> {
    let req = body(req)?;
    Ok(Json(blocking(engine, move |e| e.vote(&id, &req)).await?).into_response())
}

async fn estimate(State(engine): State<Shared>, Path(id): Path<String>) -> Result<Response> {
    Ok(Json(engine.estimate(&id)?.as_ref().clone()).into_response())
}

async fn export(State(engine): State<Shared>, Path(id): Path<String>) -> Result<Response> {
    let csv = blocking(engine, move |e| e.export_csv(&id)).await?;
    Ok(([(header::CONTENT_TYPE, "text/csv; charset=utf-8")], csv).into_response())
}

async fn health() -> Json<serde_json::Value> {
    Json(json!({ "status": "ok" }))
}

async fn fallback() -> ServiceError {
    ServiceError::NotFound("route".into())
}

pub fn router(engine: Shared) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/experiments", post(create).get(list))
        .route("/experiments/{id}", get(show))
        .route("/experiments/{id}/batch", get(batch))
        .route("/experiments/{id}/votes", post(vote))
        .route("/experiments/{id}/estimate", get(estimate))
        .route("/experiments/{id}/export", get(export))
        .fallback(fallback)
        .with_state(engine)
}

/// Serves until `shutdown` resolves, then snapshots every experiment.
pub async fn serve(
    engine: Shared,
    listener: TcpListener,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> Result<()> {
    let app = router(engine.clone());
    axum::serve(listener, app).with_graceful_shutdown(shutdown).await?;
    tokio::task::spawn_blocking(move || engine.flush())
        .await
        .map_err(|e| ServiceError::Corrupt(format!("flush task failed: {e}")))?;
    Ok(())
}

/// Resolves on Ctrl-C or, on Unix, SIGTERM.
pub async fn shutdown_signal() {
    let ctrl_c = async {
        if let Err(e) = tokio::signal::ctrl_c().await {
            tracing::warn!(error = %e, "cannot listen for Ctrl-C");
            std::future::pending::<()>().await;
        }
    };
    #[cfg(unix)]
    let term = async {
        match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(mut s) => {
                s.recv().await;
            }
            Err(e) => {
                tracing::warn!(error = %e, "cannot listen for SIGTERM");
                std::future::pending::<()>().await;
            }
        }
    };
    #[cfg(not(unix))]
    let term = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {},
        _ = term => {},
    }
    tracing::info!("shutting down");
}
