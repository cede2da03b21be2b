//! HTTP front-end for live screening projects and news scans.
//!
//! | method | path | |
//! |---|---|---|
//! | POST | `/projects` | multipart `file` (CSV) + `mapping` (JSON) |
//! | GET | `/projects/{id}` | label counts |
//! | GET | `/projects/{id}/queue?limit=n` | unlabeled records, best first |
//! | POST | `/projects/{id}/labels` | `[{"record_id", "label"}]` |
//! | POST | `/projects/{id}/rerank` | `{"ensemble", "rng_seed"}`, both optional |
//! | POST | `/projects/{id}/llm` | prompt parts; starts a job |
//! | GET | `/projects/{id}/llm/{job_id}` | job status |
//! | GET | `/projects/{id}/mini-report` | report JSON |
//! | GET | `/projects/{id}/gain-curve.csv` | |
//! | GET | `/projects/{id}/export?format=csv\|ris` | |
//! | POST | `/scans` | multipart `queries` + optional `params` (JSON) |
//! | GET | `/scans/{id}` | status and per-query progress |
//! | GET | `/scans/{id}/export?format=csv\|ris\|searchdoc` | |
//!
//! Errors are always an [`ApiError`] JSON body.

pub mod config;
pub mod error;
pub mod projects;
pub mod scans;
pub mod state;

use std::sync::Arc;
use std::time::Instant;

use axum::extract::{DefaultBodyLimit, Request};
use axum::middleware::{self, Next};
use axum::response::Response;
use axum::routing::{get, post};
use axum::Router;

pub use crate::config::ServiceConfig;
pub use crate::error::{ApiError, ErrorCode};
pub use crate::state::AppState;

pub fn router(state: Arc<AppState>) -> Router {
    let limit = state.config.max_payload_bytes;
    Router::new()
        .route("/projects", post(projects::create_project))
        .route("/projects/{id}", get(projects::get_project))
        .route("/projects/{id}/queue", get(projects::get_queue))
        .route("/projects/{id}/labels", post(projects::post_labels))
        .route("/projects/{id}/rerank", post(projects::post_rerank))
        .route("/projects/{id}/llm", post(projects::post_llm))
        .route("/projects/{id}/llm/{job_id}", get(projects::get_llm_job))
        .route("/projects/{id}/mini-report", get(projects::get_mini_report))
        .route("/projects/{id}/gain-curve.csv", get(projects::get_gain_curve))
        .route("/projects/{id}/export", get(projects::export_project))
        .route("/scans", post(scans::create_scan))
        .route("/scans/{id}", get(scans::get_scan))
        .route("/scans/{id}/export", get(scans::export_scan))
        .fallback(|| async { ApiError::not_found("no such route") })
        .method_not_allowed_fallback(|| async {
            ApiError::bad_request("method not allowed").with_status(axum::http::StatusCode::METHOD_NOT_ALLOWED)
        })
        .layer(DefaultBodyLimit::max(limit))
        .layer(middleware::from_fn(log_request))
        .with_state(state)
}

async fn log_request(request: Request, next: Next) -> Response {
    let method = request.method().clone();
    let path = request.uri().path().to_string();
    let started = Instant::now();
    let response = next.run(request).await;
    tracing::info!(
        %method,
        %path,
        status = response.status().as_u16(),
        elapsed_ms = started.elapsed().as_millis() as u64,
        "request"
    );
    response
}

pub async fn serve(listener: tokio::net::TcpListener, state: Arc<AppState>) -> std::io::Result<()> {
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
