use std::collections::{BTreeMap, HashMap};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};

use axum::body::Bytes;
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use recondet_core::boxes::parse_predictions;
use recondet_core::sidecar::{sidecar_path, Sidecar};
use recondet_core::{load_volume, ImageVolume};
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;
use tower_http::services::ServeDir;

use crate::clock::Clock;
use crate::config::{CaseDescriptor, Condition, ConfigError, ImageSet, StudyConfig};
use crate::render::{display_window, render_slice_png};
use crate::report::{compute_study_report, ReportError, StudyReport, Table4Row};
use crate::response::{ReaderResponse, ResponseSubmission};
use crate::store::{ResponseStore, StoreError, StoreState};
use crate::stratify::{assign_from_config, Assignment, StratifyError};

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Stratify(#[from] StratifyError),
    #[error(transparent)]
    Store(#[from] StoreError),
}

/// Why a reader may not open or answer a condition.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Gate {
    #[error("case {case:?} is not assigned to reader {reader:?}")]
    Unassigned { reader: String, case: String },
    #[error("condition {0} is not part of the study")]
    UnknownCondition(Condition),
    #[error("condition {0} already answered")]
    Answered(Condition),
    #[error("condition {0} opens after {1} is answered")]
    Pending(Condition, Condition),
    #[error("condition {condition} is in washout until {available_at}")]
    Washout { condition: Condition, available_at: u64 },
}

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl ToString) -> Self {
        Self {
            status,
            message: message.to_string(),
        }
    }
}

impl From<Gate> for ApiError {
    fn from(g: Gate) -> Self {
        let status = match g {
            Gate::Unassigned { .. } => StatusCode::NOT_FOUND,
            Gate::UnknownCondition(_) => StatusCode::BAD_REQUEST,
            Gate::Answered(_) | Gate::Pending(..) | Gate::Washout { .. } => StatusCode::FORBIDDEN,
        };
        Self::new(status, g)
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        let status = match e {
            StoreError::Duplicate { .. } => StatusCode::CONFLICT,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        Self::new(status, e)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self.message }))).into_response()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ConditionState {
    Answered,
    Active,
    Locked,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConditionStatus {
    pub condition: Condition,
    pub state: ConditionState,
    /// Earliest time the condition opens when it is waiting on washout.
    pub available_at: Option<u64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CaseStatus {
    pub case_id: String,
    pub n_slices: Option<usize>,
    pub conditions: Vec<ConditionStatus>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ReaderView {
    pub reader_id: String,
    pub washout_seconds: u64,
    pub now: u64,
    pub cases: Vec<CaseStatus>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoxView {
    pub slice: usize,
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
    pub confidence: f64,
}

type CachedVolume = Arc<(ImageVolume, (f64, f64))>;

pub struct StudyService {
    pub config: StudyConfig,
    pub assignment: Assignment,
    pub store: ResponseStore,
    clock: Arc<dyn Clock>,
    volumes: RwLock<HashMap<PathBuf, CachedVolume>>,
}

pub type AppState = Arc<StudyService>;

impl StudyService {
    pub fn new(config: StudyConfig, store_dir: &Path, clock: Arc<dyn Clock>) -> Result<Self, ServiceError> {
        config.validate()?;
        let assignment = assign_from_config(&config)?;
        let store = ResponseStore::open(store_dir)?;
        Ok(Self {
            config,
            assignment,
            store,
            clock,
            volumes: RwLock::new(HashMap::new()),
        })
    }

    pub fn now(&self) -> u64 {
        self.clock.now()
    }

    /// Whether `reader` may open `condition` of `case` given `state`. The
    /// conditions of a case open one at a time in plan order, each at least
    /// the washout interval after the previous one was answered.
    pub fn gate(&self, state: &StoreState, reader: &str, case: &str, condition: Condition) -> Result<(), Gate> {
        let plan = self.assignment.plan(reader, case).ok_or_else(|| Gate::Unassigned {
            reader: reader.into(),
            case: case.into(),
        })?;
        let idx = plan
            .conditions
            .iter()
            .position(|&c| c == condition)
            .ok_or(Gate::UnknownCondition(condition))?;
        if state.get(reader, case, condition).is_some() {
            return Err(Gate::Answered(condition));
        }
        let mut last = None;
        for &prev in &plan.conditions[..idx] {
            match state.get(reader, case, prev) {
                Some(r) => last = Some(r.timestamp),
                None => return Err(Gate::Pending(condition, prev)),
            }
        }
        if let Some(t) = last {
            let available_at = t.saturating_add(self.config.washout_seconds);
            if self.now() < available_at {
                return Err(Gate::Washout { condition, available_at });
            }
        }
        Ok(())
    }

    pub fn reader_view(&self, reader: &str) -> Option<ReaderView> {
        let plans = self.assignment.readers.get(reader)?;
        let state = self.store.state();
        let cases = plans
            .iter()
            .map(|p| CaseStatus {
                case_id: p.case_id.clone(),
                n_slices: self.config.case(&p.case_id).and_then(|c| slice_count(&self.config.resolve(&c.volume_path))),
                conditions: p
                    .conditions
                    .iter()
                    .map(|&c| {
                        let (st, available_at) = match self.gate(&state, reader, &p.case_id, c) {
                            Ok(()) => (ConditionState::Active, None),
                            Err(Gate::Answered(_)) => (ConditionState::Answered, None),
                            Err(Gate::Washout { available_at, .. }) => (ConditionState::Locked, Some(available_at)),
                            Err(_) => (ConditionState::Locked, None),
                        };
                        ConditionStatus {
                            condition: c,
                            state: st,
                            available_at,
                        }
                    })
                    .collect(),
            })
            .collect();
        Some(ReaderView {
            reader_id: reader.into(),
            washout_seconds: self.config.washout_seconds,
            now: self.now(),
            cases,
        })
    }

    fn volume(&self, case: &CaseDescriptor, image: ImageSet) -> Result<CachedVolume, ApiError> {
        let rel = match image {
            ImageSet::Original => Some(&case.volume_path),
            ImageSet::Reconstructed => case.reconstruction_path.as_ref(),
        }
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, format!("{}: no reconstruction", case.id)))?;
        let path = self.config.resolve(rel);
        if let Some(v) = self.volumes.read().expect("cache lock").get(&path) {
            return Ok(v.clone());
        }
        let vol = load_volume(&path).map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e))?;
        let window = display_window(&vol);
        let entry = Arc::new((vol, window));
        self.volumes.write().expect("cache lock").insert(path, entry.clone());
        Ok(entry)
    }

    pub fn boxes(&self, case: &CaseDescriptor) -> Result<Vec<BoxView>, ApiError> {
        let Some(rel) = &case.predictions_path else {
            return Ok(Vec::new());
        };
        let preds = parse_predictions(&self.config.resolve(rel))
            .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e))?;
        let threshold = self.config.box_confidence_threshold;
        Ok(preds
            .by_slice
            .values()
            .flatten()
            .filter(|p| p.confidence >= threshold)
            .map(|p| BoxView {
                slice: p.bbox.slice_index,
                x_min: p.bbox.x_min,
                y_min: p.bbox.y_min,
                x_max: p.bbox.x_max,
                y_max: p.bbox.y_max,
                confidence: p.confidence,
            })
            .collect())
    }

    /// Validates and durably records one submission.
    pub fn record(&self, s: ResponseSubmission) -> Result<(u64, ReaderResponse), ApiError> {
        let r = ReaderResponse::from_submission(s, self.now()).map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, e))?;
        let seq = self.store.append_checked(r.clone(), |state| {
            match self.gate(state, &r.reader_id, &r.case_id, r.condition) {
                Err(Gate::Answered(_)) | Ok(()) => Ok(()),
                Err(g) => Err(ApiError::from(g)),
            }
        })?;
        Ok((seq, r))
    }

    pub fn report(&self) -> Result<StudyReport, ReportError> {
        let state = self.store.state();
        compute_study_report(
            state.responses(),
            &self.config.ground_truth(),
            &self.assignment.overlap,
            &self.config.conditions,
            Some(&self.assignment),
        )
    }
}

fn slice_count(volume: &Path) -> Option<usize> {
    let mut payload = volume.to_path_buf();
    if payload.extension().and_then(|e| e.to_str()) != Some("f32raw") {
        payload = payload.with_extension("f32raw");
    }
    Sidecar::read(&sidecar_path(&payload)).ok()?.dims(3).ok().map(|d| d[0])
}

#[derive(Debug, Deserialize)]
pub struct ViewQuery {
    pub condition: String,
    pub reader: String,
}

fn parse_condition(s: &str) -> Result<Condition, ApiError> {
    s.parse().map_err(|e: String| ApiError::new(StatusCode::BAD_REQUEST, e))
}

fn lookup_case<'a>(svc: &'a StudyService, id: &str) -> Result<&'a CaseDescriptor, ApiError> {
    svc.config
        .case(id)
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, format!("unknown case {id:?}")))
}

async fn assignment(State(svc): State<AppState>, UrlPath(reader): UrlPath<String>) -> Result<Json<ReaderView>, ApiError> {
    svc.reader_view(&reader)
        .map(Json)
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, format!("unknown reader {reader:?}")))
}

async fn slice(
    State(svc): State<AppState>,
    UrlPath((id, file)): UrlPath<(String, String)>,
    Query(q): Query<ViewQuery>,
) -> Result<Response, ApiError> {
    let n: usize = file
        .strip_suffix(".png")
        .unwrap_or(&file)
        .parse()
        .map_err(|_| ApiError::new(StatusCode::BAD_REQUEST, format!("bad slice {file:?}")))?;
    let condition = parse_condition(&q.condition)?;
    let case = lookup_case(&svc, &id)?;
    svc.gate(&svc.store.state(), &q.reader, &id, condition)?;
    let vol = svc.volume(case, condition.image)?;
    let png = render_slice_png(&vol.0, n, vol.1)
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, format!("slice {n} out of range")))?;
    Ok(([(header::CONTENT_TYPE, "image/png")], png).into_response())
}

async fn boxes(
    State(svc): State<AppState>,
    UrlPath(id): UrlPath<String>,
    Query(q): Query<ViewQuery>,
) -> Result<Json<serde_json::Value>, ApiError> {
    let condition = parse_condition(&q.condition)?;
    let case = lookup_case(&svc, &id)?;
    if !condition.shows_boxes() {
        return Err(ApiError::new(
            StatusCode::FORBIDDEN,
            format!("boxes are not shown under {condition}"),
        ));
    }
    svc.gate(&svc.store.state(), &q.reader, &id, condition)?;
    let boxes = svc.boxes(case)?;
    Ok(Json(json!({ "case_id": id, "condition": condition, "boxes": boxes })))
}

async fn submit(State(svc): State<AppState>, body: Bytes) -> Result<Response, ApiError> {
    let s: ResponseSubmission =
        serde_json::from_slice(&body).map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, e))?;
    let (seq, r) = tokio::task::spawn_blocking(move || svc.record(s))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e))??;
    Ok((StatusCode::CREATED, Json(json!({ "seq": seq, "response": r }))).into_response())
}

#[derive(Serialize)]
struct ReportBody {
    report: StudyReport,
    table4: BTreeMap<&'static str, Vec<Table4Row>>,
}

async fn report(State(svc): State<AppState>) -> Result<Json<ReportBody>, ApiError> {
    let report = svc.report().map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, e))?;
    let table4 = BTreeMap::from([
        ("original", report.table4(ImageSet::Original)),
        ("reconstructed", report.table4(ImageSet::Reconstructed)),
    ]);
    Ok(Json(ReportBody { report, table4 }))
}

pub fn router(state: AppState) -> Router {
    let mut app = Router::new()
        .route("/api/assignment/{reader}", get(assignment))
        .route("/api/case/{id}/slice/{file}", get(slice))
        .route("/api/case/{id}/boxes", get(boxes))
        .route("/api/response", post(submit))
        .route("/api/report", get(report));
    if let Some(ui) = &state.config.ui_dir {
        app = app.fallback_service(ServeDir::new(state.config.resolve(ui)));
    }
    app.with_state(state)
}

/// Serves until Ctrl-C.
pub async fn serve(addr: SocketAddr, state: AppState) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("reader service on http://{}", listener.local_addr()?);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
