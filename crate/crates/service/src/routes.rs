// SPDX-License-Identifier: Apache-2.0

use std::sync::atomic::Ordering;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{FromRequest, Path, Query, Request, State};
use axum::http::{header, Method, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use lodgewright_core::context::ContextDocument;
use lodgewright_core::dataset::{DatasetExample, Split};
use lodgewright_core::evaluation::{
    render_report_table, AnnotationRecord, ModelReport, RunMetrics, DEFAULT_MATCH_THRESHOLD,
};
use lodgewright_core::generation::{ExperimentReport, ExperimentSpec, GenerationRun};
use lodgewright_core::ingest::{FacilityRecord, MergedFacility, ProviderDescriptor};
use lodgewright_core::prompt::PromptStrategy;
use lodgewright_core::{Error, IngestSummary, SplitSummary};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::ApiError;
use crate::AppState;

type ApiResult<T> = Result<T, ApiError>;
type AppRef = State<Arc<AppState>>;

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/health", get(|| async { "ok" }))
        .route("/providers", get(list_providers).post(register_provider))
        .route("/catalogs", post(ingest_catalog))
        .route("/facilities", get(list_facilities).post(add_facility))
        .route("/facilities/{id}", get(get_facility))
        .route("/contexts/{facility}", get(get_context))
        .route("/datasets", get(list_examples))
        .route("/datasets/split", post(split_dataset))
        .route("/prompts/{facility}", get(render_prompt))
        .route("/experiments", get(list_experiments).post(start_experiment))
        .route("/experiments/{id}", get(get_experiment))
        .route("/runs", get(list_runs))
        .route("/runs/{id}", get(get_run))
        .route("/runs/{id}/annotations", get(list_annotations).post(post_annotation))
        .route("/runs/{id}/metrics", get(get_metrics))
        .route("/reports", get(all_reports))
        .route("/reports/{model}", get(model_report))
        .layer(middleware::from_fn_with_state(state.clone(), require_token))
        .with_state(state)
}

async fn require_token(State(state): AppRef, req: Request, next: Next) -> Response {
    let safe = matches!(*req.method(), Method::GET | Method::HEAD | Method::OPTIONS);
    if let (false, Some(token)) = (safe, &state.token) {
        let presented = req
            .headers()
            .get(header::AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "));
        if presented != Some(token.as_str()) {
            return ApiError::unauthorized().into_response();
        }
    }
    next.run(req).await
}

/// JSON body whose decoding errors carry a pointer to the offending field.
pub struct Body<T>(pub T);

impl<S: Send + Sync, T: DeserializeOwned> FromRequest<S> for Body<T> {
    type Rejection = ApiError;

    async fn from_request(req: Request, state: &S) -> Result<Self, ApiError> {
        let bytes = Bytes::from_request(req, state)
            .await
            .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "E_BODY", e.body_text()))?;
        decode(&bytes).map(Body)
    }
}

fn decode<T: DeserializeOwned>(bytes: &[u8]) -> ApiResult<T> {
    let de = &mut serde_json::Deserializer::from_slice(bytes);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let pointer = json_pointer(e.path());
        ApiError::invalid_body(pointer, e.into_inner().to_string())
    })
}

fn json_pointer(path: &serde_path_to_error::Path) -> String {
    use serde_path_to_error::Segment;
    path.iter()
        .filter_map(|s| match s {
            Segment::Seq { index } => Some(format!("/{index}")),
            Segment::Map { key } => Some(format!("/{}", key.replace('~', "~0").replace('/', "~1"))),
            Segment::Enum { variant } => Some(format!("/{variant}")),
            Segment::Unknown => None,
        })
        .collect()
}

async fn list_providers(State(s): AppRef) -> Json<Vec<ProviderDescriptor>> {
    Json(s.workbench.providers())
}

async fn register_provider(
    State(s): AppRef,
    Body(d): Body<ProviderDescriptor>,
) -> ApiResult<(StatusCode, Json<ProviderDescriptor>)> {
    Ok((StatusCode::CREATED, Json(s.workbench.register_provider(d)?)))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CatalogUpload {
    pub provider_id: String,
    /// Catalog file contents in the provider's declared format.
    pub payload: String,
}

async fn ingest_catalog(State(s): AppRef, Body(u): Body<CatalogUpload>) -> ApiResult<Json<IngestSummary>> {
    Ok(Json(s.workbench.ingest(&u.provider_id, u.payload.as_bytes())?))
}

async fn list_facilities(State(s): AppRef) -> Json<Vec<MergedFacility>> {
    Json(s.workbench.facilities())
}

async fn add_facility(
    State(s): AppRef,
    Body(r): Body<FacilityRecord>,
) -> ApiResult<(StatusCode, Json<MergedFacility>)> {
    Ok((StatusCode::CREATED, Json(s.workbench.add_facility(r)?)))
}

async fn get_facility(State(s): AppRef, Path(id): Path<String>) -> ApiResult<Json<MergedFacility>> {
    Ok(Json(s.workbench.facility(&id)?))
}

#[derive(Debug, Default, Deserialize)]
struct FormatQuery {
    #[serde(default)]
    format: Option<String>,
}

impl FormatQuery {
    fn text(&self) -> ApiResult<bool> {
        match self.format.as_deref() {
            None | Some("json") => Ok(false),
            Some("text") => Ok(true),
            Some(other) => Err(ApiError::invalid_body("/format".into(), format!("unknown format `{other}`"))),
        }
    }
}

fn plain(text: String) -> Response {
    ([(header::CONTENT_TYPE, "text/plain; charset=utf-8")], text).into_response()
}

async fn get_context(State(s): AppRef, Path(id): Path<String>, Query(q): Query<FormatQuery>) -> ApiResult<Response> {
    let doc: ContextDocument = s.workbench.context(&id)?;
    Ok(if q.text()? { plain(doc.serialized) } else { Json(doc).into_response() })
}

#[derive(Debug, Deserialize)]
struct SplitQuery {
    split: Option<Split>,
}

async fn list_examples(State(s): AppRef, Query(q): Query<SplitQuery>) -> Json<Vec<DatasetExample>> {
    Json(s.workbench.examples(q.split))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SplitRequest {
    pub train_count: usize,
    pub seed: u64,
}

async fn split_dataset(State(s): AppRef, Body(r): Body<SplitRequest>) -> ApiResult<Json<SplitSummary>> {
    Ok(Json(s.workbench.split(r.train_count, r.seed)?))
}

#[derive(Debug, Deserialize)]
struct PromptQuery {
    strategy: PromptStrategy,
    template: Option<String>,
}

async fn render_prompt(State(s): AppRef, Path(id): Path<String>, Query(q): Query<PromptQuery>) -> ApiResult<Response> {
    Ok(plain(s.workbench.render_prompt(&id, q.strategy, q.template.as_deref())?))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExperimentState {
    Running,
    Completed,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentStatus {
    pub experiment_id: String,
    pub state: ExperimentState,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report: Option<ExperimentReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<crate::ErrorBody>,
}

async fn start_experiment(
    State(s): AppRef,
    Body(spec): Body<ExperimentSpec>,
) -> ApiResult<(StatusCode, Json<ExperimentStatus>)> {
    let backend = s.backend.clone().ok_or_else(|| {
        ApiError::new(
            StatusCode::SERVICE_UNAVAILABLE,
            "E_NO_BACKEND",
            format!("no inference backend configured; set {}", crate::BACKEND_URL_ENV),
        )
    })?;
    for (i, config) in spec.models.iter().enumerate() {
        config.validate().map_err(|e| ApiError::invalid_body(format!("/models/{i}"), e.to_string()))?;
    }
    let id = format!("exp-{}", s.next_experiment.fetch_add(1, Ordering::Relaxed));
    let status =
        ExperimentStatus { experiment_id: id.clone(), state: ExperimentState::Running, report: None, error: None };
    s.experiments.lock().insert(id.clone(), status.clone());
    let state = s.clone();
    tokio::spawn(async move {
        let outcome = state.workbench.experiment(&spec, backend.as_ref()).await;
        let mut jobs = state.experiments.lock();
        let entry = jobs.get_mut(&id).expect("registered before spawn");
        match outcome {
            Ok(report) => {
                entry.state = ExperimentState::Completed;
                entry.report = Some(report);
            }
            Err(e) => {
                entry.state = ExperimentState::Failed;
                entry.error = Some(ApiError::from(e).body);
            }
        }
    });
    Ok((StatusCode::ACCEPTED, Json(status)))
}

async fn list_experiments(State(s): AppRef) -> Json<Vec<ExperimentStatus>> {
    Json(s.experiments.lock().values().cloned().collect())
}

async fn get_experiment(State(s): AppRef, Path(id): Path<String>) -> ApiResult<Json<ExperimentStatus>> {
    let jobs = s.experiments.lock();
    jobs.get(&id).cloned().map(Json).ok_or_else(|| Error::not_found("experiment", id).into())
}

#[derive(Debug, Deserialize)]
struct RunsQuery {
    model: Option<String>,
}

async fn list_runs(State(s): AppRef, Query(q): Query<RunsQuery>) -> Json<Vec<GenerationRun>> {
    Json(s.workbench.runs(q.model.as_deref()))
}

async fn get_run(State(s): AppRef, Path(id): Path<String>) -> ApiResult<Json<GenerationRun>> {
    Ok(Json(s.workbench.run(&id)?))
}

async fn list_annotations(State(s): AppRef, Path(id): Path<String>) -> ApiResult<Json<Vec<AnnotationRecord>>> {
    Ok(Json(s.workbench.annotations(&id)?))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct AutoRequest {
    #[allow(dead_code)]
    auto: bool,
    #[serde(default = "default_threshold")]
    threshold: f64,
}

fn default_threshold() -> f64 {
    DEFAULT_MATCH_THRESHOLD
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationResponse {
    pub annotation: AnnotationRecord,
    pub metrics: RunMetrics,
}

/// Stores a full annotation record, or `{"auto": true, "threshold": ..}`
/// to annotate the run automatically.
async fn post_annotation(
    State(s): AppRef,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<(StatusCode, Json<AnnotationResponse>)> {
    s.workbench.run(&id)?;
    let value: serde_json::Value = decode(&body)?;
    let response = if value.get("auto") == Some(&serde_json::Value::Bool(true)) {
        let req: AutoRequest = decode(&body)?;
        let (annotation, metrics) = s.workbench.auto_annotate(&id, req.threshold)?;
        AnnotationResponse { annotation, metrics }
    } else {
        let annotation: AnnotationRecord = decode(&body)?;
        let metrics = s.workbench.annotate(&id, annotation.clone())?;
        let mut annotation = annotation;
        if annotation.run_id.is_empty() {
            annotation.run_id = id;
        }
        AnnotationResponse { annotation, metrics }
    };
    Ok((StatusCode::CREATED, Json(response)))
}

async fn get_metrics(State(s): AppRef, Path(id): Path<String>) -> ApiResult<Json<Option<RunMetrics>>> {
    Ok(Json(s.workbench.run_metrics(&id)?))
}

async fn all_reports(State(s): AppRef, Query(q): Query<FormatQuery>) -> ApiResult<Response> {
    let reports = s.workbench.reports(&[])?;
    report_response(reports, &q)
}

async fn model_report(
    State(s): AppRef,
    Path(model): Path<String>,
    Query(q): Query<FormatQuery>,
) -> ApiResult<Response> {
    let reports = s.workbench.reports(&[model])?;
    report_response(reports, &q)
}

fn report_response(reports: Vec<ModelReport>, q: &FormatQuery) -> ApiResult<Response> {
    Ok(if q.text()? {
        plain(render_report_table(&reports))
    } else if let [one] = reports.as_slice() {
        Json(one).into_response()
    } else {
        Json(reports).into_response()
    })
}
