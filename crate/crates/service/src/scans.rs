use std::sync::Arc;

use axum::extract::multipart::{Multipart, MultipartRejection};
use axum::extract::rejection::QueryRejection;
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::Json;
use horizon_core::retrieval::{
    export_articles_csv, export_articles_ris, export_search_doc, parse_query_file, run_scan, ScanParams, ScanProgress,
};
use serde::Deserialize;

use crate::error::ApiError;
use crate::state::{AppState, JobStatus, QueryState, ScanJob};

type Shared = State<Arc<AppState>>;

/// Start a scan. Multipart fields: `queries` (one query per line) and an
/// optional `params` JSON object.
pub async fn create_scan(
    State(state): Shared,
    multipart: Result<Multipart, MultipartRejection>,
) -> Result<Response, ApiError> {
    let mut multipart = multipart?;
    let mut queries = None;
    let mut params = ScanParams::default();
    while let Some(field) = multipart.next_field().await? {
        match field.name().unwrap_or_default() {
            "queries" => {
                queries =
                    Some(parse_query_file(&field.bytes().await?).map_err(|e| ApiError::bad_request(e.to_string()))?)
            }
            "params" => {
                let text = field.text().await?;
                params = serde_json::from_str(&text).map_err(|e| ApiError::bad_request(format!("params: {e}")))?;
            }
            _ => {}
        }
    }
    let queries = queries.ok_or_else(|| ApiError::bad_request("missing multipart field \"queries\""))?;
    params.validate().map_err(|e| ApiError::bad_request(e.to_string()))?;

    let job = state.insert_scan(ScanJob::new(state.next_id("scan"), &queries, params.clone()));
    let snapshot = job.lock().expect("scan job poisoned").clone();
    let transport = Arc::clone(&state.transport);
    let clock = Arc::clone(&state.clock);
    tokio::task::spawn_blocking(move || {
        job.lock().expect("scan job poisoned").set_status(JobStatus::Running);
        let mut on_progress = |event: ScanProgress| {
            let mut job = job.lock().expect("scan job poisoned");
            match event {
                ScanProgress::QueryDone { index, n_retrieved, .. } => {
                    let q = &mut job.queries[index];
                    q.state = QueryState::Done;
                    q.n_retrieved = Some(n_retrieved);
                }
                ScanProgress::QueryFailed { index, error, .. } => {
                    let q = &mut job.queries[index];
                    q.state = QueryState::Failed;
                    q.error = Some(error);
                }
                ScanProgress::ArticleScraped { index, total } => {
                    job.articles_scraped = index + 1;
                    job.articles_to_scrape = total;
                }
            }
        };
        let outcome = run_scan(&queries, &params, clock.as_ref(), transport.as_ref(), &mut on_progress);
        let mut job = job.lock().expect("scan job poisoned");
        match outcome {
            Ok(result) => {
                job.n_articles = Some(result.articles.len());
                job.search_doc = result.search_doc.clone();
                job.warnings = result.warnings.clone();
                job.failed_queries = result.failed_queries.clone();
                job.result = Some(result);
                job.set_status(JobStatus::Done);
            }
            Err(e) => {
                job.error = Some(e.to_string());
                job.set_status(JobStatus::Failed);
            }
        }
        tracing::info!(scan = %job.scan_id, status = ?job.status, "scan finished");
    });
    Ok((StatusCode::ACCEPTED, Json(snapshot)).into_response())
}

pub async fn get_scan(State(state): Shared, Path(id): Path<String>) -> Result<Json<ScanJob>, ApiError> {
    let job = state
        .scan(&id)
        .ok_or_else(|| ApiError::not_found(format!("no scan {id:?}")))?;
    let snapshot = job.lock().expect("scan job poisoned").clone();
    Ok(Json(snapshot))
}

#[derive(Debug, Deserialize)]
pub struct ExportParams {
    pub format: Option<String>,
}

pub async fn export_scan(
    State(state): Shared,
    Path(id): Path<String>,
    params: Result<Query<ExportParams>, QueryRejection>,
) -> Result<Response, ApiError> {
    let Query(params) = params?;
    let job = state
        .scan(&id)
        .ok_or_else(|| ApiError::not_found(format!("no scan {id:?}")))?;
    let job = job.lock().expect("scan job poisoned");
    let result = job
        .result
        .as_ref()
        .ok_or_else(|| ApiError::conflict(format!("scan {id:?} has no results (status {:?})", job.status)))?;
    let csv = "text/csv; charset=utf-8";
    let (content_type, body) = match params.format.as_deref() {
        Some("csv") => (csv, export_articles_csv(&result.articles)),
        Some("ris") => (
            "application/x-research-info-systems",
            export_articles_ris(&result.articles),
        ),
        Some("searchdoc") => (csv, export_search_doc(&result.search_doc)),
        other => {
            return Err(ApiError::bad_request(format!(
                "format must be csv, ris or searchdoc, got {:?}",
                other.unwrap_or("")
            )))
        }
    };
    Ok(([(header::CONTENT_TYPE, content_type)], body).into_response())
}
