use std::collections::{BTreeMap, HashSet};
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::multipart::{Multipart, MultipartRejection};
use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::Json;
use horizon_core::eval::{gain_curve_csv, mini_report, project_report_json};
use horizon_core::io::{export_csv, export_ris, import_csv};
use horizon_core::llm::{classify_batch, BatchConfig, BatchInput, PromptTemplate, DEFAULT_OUTPUT_INSTRUCTION};
use horizon_core::ranking::{EnsembleConfig, RankingSummary, Reranker};
use horizon_core::record::ColumnMapping;
use horizon_core::{Label, Project, RecordItem};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::ApiError;
use crate::state::{AppState, JobStatus, LlmCounts, LlmJob, ProjectSlot};

/// Includes a project needs before the first rerank.
pub const MIN_INCLUDES_FOR_RERANK: usize = 3;

type Shared = State<Arc<AppState>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectSummary {
    pub project_id: String,
    pub n_records: usize,
    pub n_includes: usize,
    pub n_excludes: usize,
    pub n_unlabeled: usize,
    pub iteration: u32,
    pub rerank_permitted: bool,
    pub n_label_events: usize,
    pub columns: Vec<String>,
}

impl ProjectSummary {
    pub fn of(project: &Project) -> Self {
        let n_includes = project.count(Label::Include);
        Self {
            project_id: project.id.clone(),
            n_records: project.records.len(),
            n_includes,
            n_excludes: project.count(Label::Exclude),
            n_unlabeled: project.count(Label::Unlabeled),
            iteration: project.iteration(),
            rerank_permitted: n_includes >= MIN_INCLUDES_FOR_RERANK,
            n_label_events: project.label_events.len(),
            columns: project.columns.clone(),
        }
    }
}

fn slot(state: &AppState, id: &str) -> Result<Arc<ProjectSlot>, ApiError> {
    state
        .project(id)
        .ok_or_else(|| ApiError::not_found(format!("no project {id:?}")))
}

fn join_error(e: tokio::task::JoinError) -> ApiError {
    ApiError::internal(format!("worker failed: {e}"))
}

pub async fn create_project(
    State(state): Shared,
    multipart: Result<Multipart, MultipartRejection>,
) -> Result<Response, ApiError> {
    let mut multipart = multipart?;
    let mut csv: Option<Bytes> = None;
    let mut mapping: Option<ColumnMapping> = None;
    while let Some(field) = multipart.next_field().await? {
        match field.name().unwrap_or_default() {
            "file" | "csv" => csv = Some(field.bytes().await?),
            "mapping" => {
                let text = field.text().await?;
                mapping =
                    Some(serde_json::from_str(&text).map_err(|e| ApiError::bad_request(format!("mapping: {e}")))?);
            }
            _ => {}
        }
    }
    let csv = csv.ok_or_else(|| ApiError::bad_request("missing multipart field \"file\""))?;
    let mapping = mapping.ok_or_else(|| ApiError::bad_request("missing multipart field \"mapping\""))?;

    let project = tokio::task::spawn_blocking(move || import_csv(&csv, &mapping))
        .await
        .map_err(join_error)?
        .map_err(|e| {
            let err = ApiError::bad_request(e.to_string());
            match e.column() {
                Some(c) => err.with_detail(json!({ "column": c })),
                None => err,
            }
        })?;
    let summary = ProjectSummary::of(&project);
    let id = state.insert_project(project);
    tracing::info!(project = %id, records = summary.n_records, "project created");
    Ok((
        StatusCode::CREATED,
        Json(ProjectSummary {
            project_id: id,
            ..summary
        }),
    )
        .into_response())
}

pub async fn get_project(State(state): Shared, Path(id): Path<String>) -> Result<Json<ProjectSummary>, ApiError> {
    let slot = slot(&state, &id)?;
    let project = slot.project.lock().await;
    Ok(Json(ProjectSummary::of(&project)))
}

#[derive(Debug, Deserialize)]
pub struct QueueParams {
    pub limit: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueueItem {
    pub record_id: String,
    pub title: String,
    pub reference_text: String,
    pub score: Option<f64>,
    pub llm_bit: Option<u8>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueueResponse {
    pub project_id: String,
    pub iteration: u32,
    pub n_unlabeled: usize,
    pub items: Vec<QueueItem>,
}

pub async fn get_queue(
    State(state): Shared,
    Path(id): Path<String>,
    params: Result<Query<QueueParams>, QueryRejection>,
) -> Result<Json<QueueResponse>, ApiError> {
    let Query(params) = params?;
    let slot = slot(&state, &id)?;
    let project = slot.project.lock().await;
    let items = project
        .queue(params.limit)
        .into_iter()
        .map(|r: &RecordItem| QueueItem {
            record_id: r.id.clone(),
            title: r.title.clone(),
            reference_text: r.reference_text.clone(),
            score: r.current_score,
            llm_bit: r.llm_bit,
        })
        .collect();
    Ok(Json(QueueResponse {
        project_id: project.id.clone(),
        iteration: project.iteration(),
        n_unlabeled: project.count(Label::Unlabeled),
        items,
    }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelUpdate {
    pub record_id: String,
    pub label: Label,
}

/// Applies every update or none: unknown ids reject the whole request.
pub async fn post_labels(
    State(state): Shared,
    Path(id): Path<String>,
    body: Result<Json<Vec<LabelUpdate>>, JsonRejection>,
) -> Result<Json<ProjectSummary>, ApiError> {
    let Json(updates) = body?;
    let slot = slot(&state, &id)?;
    let mut project = slot.project.lock().await;
    let known: HashSet<&str> = project.records.iter().map(|r| r.id.as_str()).collect();
    let unknown: Vec<&str> = updates
        .iter()
        .map(|u| u.record_id.as_str())
        .filter(|r| !known.contains(r))
        .collect();
    if !unknown.is_empty() {
        return Err(ApiError::not_found(format!("unknown record id {:?}", unknown[0]))
            .with_detail(json!({ "record_ids": unknown })));
    }
    for u in &updates {
        project
            .apply_label(&u.record_id, u.label)
            .map_err(|e| ApiError::not_found(e.to_string()))?;
    }
    Ok(Json(ProjectSummary::of(&project)))
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RerankRequest {
    pub ensemble: EnsembleConfig,
    /// Fresh entropy when absent; the seed used is echoed back.
    pub rng_seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RerankResponse {
    pub project_id: String,
    pub iteration: u32,
    pub rng_seed: u64,
    pub n_ranked: usize,
    pub summary: RankingSummary,
}

pub async fn post_rerank(
    State(state): Shared,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Json<RerankResponse>, ApiError> {
    let request: RerankRequest = if body.iter().all(u8::is_ascii_whitespace) {
        RerankRequest::default()
    } else {
        serde_json::from_slice(&body).map_err(|e| ApiError::bad_request(format!("rerank options: {e}")))?
    };
    request.ensemble.validate().map_err(ApiError::bad_request)?;
    let slot = slot(&state, &id)?;
    let guard = slot
        .try_begin_rerank()
        .ok_or_else(|| ApiError::busy("a rerank of this project is already running"))?;
    let mut project = Arc::clone(&slot.project).lock_owned().await;
    let includes = project.count(Label::Include);
    if includes < MIN_INCLUDES_FOR_RERANK {
        return Err(ApiError::conflict(format!(
            "reranking needs at least {MIN_INCLUDES_FOR_RERANK} included records, found {includes}"
        ))
        .with_detail(json!({ "n_includes": includes, "required": MIN_INCLUDES_FOR_RERANK })));
    }

    let seed = request.rng_seed.unwrap_or_else(rand::random);
    let embedder = Arc::clone(&state.embedder);
    let slot2 = Arc::clone(&slot);
    let outcome = tokio::task::spawn_blocking(move || {
        let _guard = guard;
        let cached = slot2.reranker.lock().expect("reranker cache poisoned").clone();
        let reranker = match cached {
            Some(r) => r,
            None => {
                let r = Arc::new(Reranker::new(embedder.as_ref(), &project.records)?);
                *slot2.reranker.lock().expect("reranker cache poisoned") = Some(Arc::clone(&r));
                r
            }
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        reranker.rerank_project(&mut project, &request.ensemble, &mut rng, None)?;
        let summary = project.ranking_history.last().cloned().expect("rerank recorded");
        Ok::<_, horizon_core::ranking::RankingError>((project.id.clone(), project.iteration(), summary))
    })
    .await
    .map_err(join_error)?;
    let (project_id, iteration, summary) = outcome.map_err(|e| ApiError::conflict(e.to_string()))?;
    tracing::info!(project = %project_id, iteration, ranker = summary.ranker_used.as_str(), "reranked");
    Ok(Json(RerankResponse {
        project_id,
        iteration,
        rng_seed: seed,
        n_ranked: summary.n_ranked,
        summary,
    }))
}

/// Prompt parts for a batch classification. Scene and criteria are
/// required; the output instruction has a default.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LlmRequest {
    pub scene: Option<String>,
    pub criteria: Option<String>,
    pub exclusions: Option<String>,
    pub output_instruction: Option<String>,
    pub batch: Option<BatchConfig>,
}

impl LlmRequest {
    fn template(&self) -> Result<PromptTemplate, ApiError> {
        let part = |value: &Option<String>, number: u8, name: &str| {
            value
                .as_deref()
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(str::to_string)
                .ok_or_else(|| {
                    ApiError::bad_request(format!("prompt part {number} ({name}) is missing"))
                        .with_detail(json!({ "part": name }))
                })
        };
        let mut template = PromptTemplate::new(part(&self.scene, 1, "scene")?, part(&self.criteria, 2, "criteria")?);
        if let Some(ex) = self.exclusions.as_deref().filter(|s| !s.trim().is_empty()) {
            template = template.with_exclusions(ex);
        }
        template.output_instruction = self
            .output_instruction
            .clone()
            .filter(|s| !s.trim().is_empty())
            .unwrap_or_else(|| DEFAULT_OUTPUT_INSTRUCTION.to_string());
        Ok(template)
    }
}

pub async fn post_llm(
    State(state): Shared,
    Path(id): Path<String>,
    body: Result<Json<LlmRequest>, JsonRejection>,
) -> Result<Response, ApiError> {
    let Json(request) = body?;
    let template = request.template()?;
    let slot = slot(&state, &id)?;
    let provider = state
        .provider
        .clone()
        .ok_or_else(|| ApiError::conflict("no LLM provider is configured"))?;
    let batch = request.batch.clone().unwrap_or_else(|| state.config.llm.batch.clone());

    let inputs: Vec<BatchInput> = {
        let project = slot.project.lock().await;
        project
            .records
            .iter()
            .map(|r| BatchInput::new(r.id.clone(), r.model_text()))
            .collect()
    };
    let job_id = state.next_id("llm");
    let job = state.insert_llm_job(LlmJob {
        job_id: job_id.clone(),
        project_id: id.clone(),
        status: JobStatus::Queued,
        history: vec![JobStatus::Queued],
        total: inputs.len(),
        completed: 0,
        counts: None,
        error: None,
    });
    let snapshot = job.lock().expect("job poisoned").clone();

    let clock = Arc::clone(&state.clock);
    tokio::task::spawn_blocking(move || {
        job.lock().expect("job poisoned").set_status(JobStatus::Running);
        let progress = |done: usize| job.lock().expect("job poisoned").completed = done;
        let outcome = classify_batch(&inputs, &template, provider.as_ref(), &batch, clock.as_ref(), &progress);
        match outcome {
            Ok(judgements) => {
                let mut project = slot.project.blocking_lock();
                let bits: std::collections::HashMap<&str, u8> =
                    judgements.iter().map(|j| (j.record_id.as_str(), j.bit)).collect();
                for record in &mut project.records {
                    if let Some(&b) = bits.get(record.id.as_str()) {
                        record.llm_bit = Some(b);
                    }
                }
                drop(project);
                let mut by_status = BTreeMap::new();
                for j in &judgements {
                    let name = serde_json::to_value(j.parse_status)
                        .ok()
                        .and_then(|v| v.as_str().map(str::to_string))
                        .unwrap_or_default();
                    *by_status.entry(name).or_insert(0) += 1;
                }
                let includes = judgements.iter().filter(|j| j.bit == 1).count();
                let mut job = job.lock().expect("job poisoned");
                job.completed = judgements.len();
                job.counts = Some(LlmCounts {
                    model_id: provider.model_id().to_string(),
                    n_judged: judgements.len(),
                    n_include_votes: includes,
                    n_exclude_votes: judgements.len() - includes,
                    by_status,
                });
                job.set_status(JobStatus::Done);
            }
            Err(e) => {
                let mut job = job.lock().expect("job poisoned");
                job.error = Some(e.to_string());
                job.set_status(JobStatus::Failed);
            }
        }
    });
    Ok((StatusCode::ACCEPTED, Json(snapshot)).into_response())
}

pub async fn get_llm_job(
    State(state): Shared,
    Path((id, job_id)): Path<(String, String)>,
) -> Result<Json<LlmJob>, ApiError> {
    let job = state
        .llm_job(&job_id)
        .map(|j| j.lock().expect("job poisoned").clone())
        .filter(|j| j.project_id == id)
        .ok_or_else(|| ApiError::not_found(format!("no LLM job {job_id:?} for project {id:?}")))?;
    Ok(Json(job))
}

fn require_includes(project: &Project) -> Result<(), ApiError> {
    if project.count(Label::Include) == 0 {
        return Err(ApiError::conflict(
            "no included records yet; the report needs at least one",
        ));
    }
    Ok(())
}

/// Same bytes as `horizon report` on the saved project. The gain-curve CSV
/// is linked from the `Link` header.
pub async fn get_mini_report(State(state): Shared, Path(id): Path<String>) -> Result<Response, ApiError> {
    let slot = slot(&state, &id)?;
    let project = slot.project.lock().await;
    require_includes(&project)?;
    let body = project_report_json(&project).map_err(|e| ApiError::conflict(e.to_string()))?;
    let link = format!("</projects/{id}/gain-curve.csv>; rel=\"gain-curve\"; type=\"text/csv\"");
    Ok((
        [
            (header::CONTENT_TYPE, "application/json".to_string()),
            (header::LINK, link),
        ],
        body,
    )
        .into_response())
}

pub async fn get_gain_curve(State(state): Shared, Path(id): Path<String>) -> Result<Response, ApiError> {
    let slot = slot(&state, &id)?;
    let project = slot.project.lock().await;
    require_includes(&project)?;
    let report = mini_report(&project).map_err(|e| ApiError::conflict(e.to_string()))?;
    Ok((
        [(header::CONTENT_TYPE, "text/csv; charset=utf-8")],
        gain_curve_csv(&report.gain_curve),
    )
        .into_response())
}

#[derive(Debug, Deserialize)]
pub struct ExportParams {
    pub format: Option<String>,
}

pub async fn export_project(
    State(state): Shared,
    Path(id): Path<String>,
    params: Result<Query<ExportParams>, QueryRejection>,
) -> Result<Response, ApiError> {
    let Query(params) = params?;
    let slot = slot(&state, &id)?;
    let project = slot.project.lock().await;
    match params.format.as_deref().unwrap_or("csv") {
        "csv" => Ok((
            [(header::CONTENT_TYPE, "text/csv; charset=utf-8")],
            export_csv(&project, true),
        )
            .into_response()),
        "ris" => {
            let records: Vec<RecordItem> = project
                .export_order()
                .into_iter()
                .map(|i| project.records[i].clone())
                .collect();
            Ok((
                [(header::CONTENT_TYPE, "application/x-research-info-systems")],
                export_ris(&records),
            )
                .into_response())
        }
        other => Err(ApiError::bad_request(format!(
            "unknown export format {other:?} (csv, ris)"
        ))),
    }
}
