//! HTTP routes over a loaded corpus, its models and the review logs.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use axum::body::Bytes;
use axum::extract::rejection::QueryRejection;
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use rehab_core::acquisition::Agent;
use rehab_core::analysis::{build_payload, PayloadInputs};
use rehab_core::corpus::Corpus;
use rehab_core::motion::Subject;
use rehab_core::prediction::{LabeledDataset, Model};
use rehab_core::{Arm, Component, Exercise, Group, Joint, MotionClip, Quality, QualityThreshold, Side};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::settings::task_name;
use crate::store::{
    summarize, Assessment, Condition, EventKind, Scores, Store, StoreError, UiEvent,
};

type Task = (Exercise, Component);

/// Read-only inputs plus the mutable logs.
pub struct AppState {
    pub corpus: Corpus,
    pub datasets: BTreeMap<Task, LabeledDataset>,
    pub models: BTreeMap<Task, Model>,
    pub agents: BTreeMap<Task, Agent>,
    pub store: Store,
}

impl AppState {
    /// Loads `data/sessions`, any `data/models/*.json` and `data/agents/*.json`,
    /// and opens the logs in `logs`.
    pub fn load(data: &Path, logs: &Path, threshold: QualityThreshold) -> anyhow::Result<AppState> {
        let corpus = Corpus::load(data)?;
        let mut datasets = BTreeMap::new();
        let mut models = BTreeMap::new();
        let mut agents = BTreeMap::new();
        for exercise in Exercise::ALL {
            for component in Component::ALL {
                let task = (exercise, component);
                let name = task_name(exercise, component);
                if corpus.training_clips(exercise).next().is_some() {
                    datasets.insert(task, corpus.dataset(exercise, component, threshold)?);
                }
                if let Some(model) = read_json::<Model>(&data.join("models").join(format!("{name}.json")))? {
                    models.insert(task, model);
                }
                if let Some(agent) = read_json::<Agent>(&data.join("agents").join(format!("{name}.json")))? {
                    agent.check_version()?;
                    agents.insert(task, agent);
                }
            }
        }
        tracing::info!(
            clips = corpus.clips.len(),
            models = models.len(),
            agents = agents.len(),
            "loaded data directory"
        );
        Ok(AppState {
            corpus,
            datasets,
            models,
            agents,
            store: Store::open(logs)?,
        })
    }
}

fn read_json<T: DeserializeOwned>(path: &Path) -> anyhow::Result<Option<T>> {
    if !path.exists() {
        return Ok(None);
    }
    let text = std::fs::read_to_string(path)?;
    let value = serde_json::from_str(&text)
        .map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))?;
    Ok(Some(value))
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/api/patients", get(patients))
        .route("/api/motions", get(motions))
        .route("/api/motions/{id}", get(motion))
        .route("/api/motions/{id}/prediction", get(prediction))
        .route("/api/motions/{id}/analysis", get(analysis))
        .route("/api/assessments", get(list_assessments).post(post_assessment))
        .route("/api/events", axum::routing::post(post_event))
        .route("/api/logs/summary", get(logs_summary))
        .fallback(|| async { ApiError::not_found("no such route") })
        .with_state(state)
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            code,
            message: message.into(),
        }
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "bad_request", message)
    }

    fn not_found(message: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, "not_found", message)
    }

    fn forbidden(message: impl Into<String>) -> Self {
        Self::new(StatusCode::FORBIDDEN, "forbidden", message)
    }

    fn unavailable(message: impl Into<String>) -> Self {
        Self::new(StatusCode::SERVICE_UNAVAILABLE, "unavailable", message)
    }

    fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = ErrorBody {
            code: self.code.to_string(),
            message: self.message,
        };
        (self.status, Json(body)).into_response()
    }
}

impl From<QueryRejection> for ApiError {
    fn from(e: QueryRejection) -> Self {
        ApiError::bad_request(e.body_text())
    }
}

impl From<rehab_core::Error> for ApiError {
    fn from(e: rehab_core::Error) -> Self {
        ApiError::internal(e.to_string())
    }
}

type ApiResult<T> = Result<T, ApiError>;
type Params = Result<Query<BTreeMap<String, String>>, QueryRejection>;

fn parse_body<T: DeserializeOwned>(body: &Bytes) -> ApiResult<T> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request(e.to_string()))
}

fn parse_param<T: std::str::FromStr>(params: &BTreeMap<String, String>, key: &str) -> ApiResult<Option<T>>
where
    T::Err: std::fmt::Display,
{
    params
        .get(key)
        .map(|v| v.parse::<T>().map_err(|e| ApiError::bad_request(format!("{key}: {e}"))))
        .transpose()
}

fn condition_param(params: &BTreeMap<String, String>) -> ApiResult<Condition> {
    match params.get("condition") {
        None => Ok(Condition::Full),
        Some(v) => Condition::parse(v)
            .ok_or_else(|| ApiError::bad_request(format!("condition: unknown value `{v}`"))),
    }
}

fn find_clip<'a>(state: &'a AppState, id: &str) -> ApiResult<&'a MotionClip> {
    state
        .corpus
        .clip(id)
        .ok_or_else(|| ApiError::not_found(format!("unknown motion `{id}`")))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientSummary {
    pub id: String,
    pub group: Group,
    pub fugl_meyer: Option<u8>,
    pub motions: usize,
}

async fn patients(State(state): State<Arc<AppState>>) -> Json<Vec<PatientSummary>> {
    let mut out: Vec<PatientSummary> = state
        .corpus
        .subjects()
        .into_iter()
        .map(|s: Subject| PatientSummary {
            motions: state.corpus.clips.iter().filter(|c| c.subject.id == s.id).count(),
            id: s.id,
            group: s.group,
            fugl_meyer: s.fugl_meyer,
        })
        .collect();
    out.sort_by(|a, b| a.id.cmp(&b.id));
    Json(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotionSummary {
    pub id: String,
    pub subject: String,
    pub exercise: Exercise,
    pub side: Side,
    pub arm: Arm,
    pub repetition: usize,
    pub fps: f64,
    pub frame_count: usize,
    pub duration: f64,
}

impl MotionSummary {
    fn of(clip: &MotionClip) -> Self {
        MotionSummary {
            id: clip.id.clone(),
            subject: clip.subject.id.clone(),
            exercise: clip.exercise,
            side: clip.side,
            arm: clip.arm,
            repetition: clip.repetition,
            fps: clip.fps,
            frame_count: clip.len(),
            duration: clip.duration(),
        }
    }
}

async fn motions(State(state): State<Arc<AppState>>, params: Params) -> ApiResult<Json<Vec<MotionSummary>>> {
    let Query(params) = params?;
    let patient = params.get("patient");
    if let Some(p) = patient {
        if !state.corpus.clips.iter().any(|c| &c.subject.id == p) {
            return Err(ApiError::not_found(format!("unknown patient `{p}`")));
        }
    }
    let mut out: Vec<MotionSummary> = state
        .corpus
        .clips
        .iter()
        .filter(|c| patient.is_none_or(|p| &c.subject.id == p))
        .map(MotionSummary::of)
        .collect();
    out.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(Json(out))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlaybackFrame {
    pub t: f64,
    pub pos: Vec<[f64; 3]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotionFrames {
    #[serde(flatten)]
    pub summary: MotionSummary,
    pub joints: Vec<String>,
    pub frames: Vec<PlaybackFrame>,
}

async fn motion(State(state): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> ApiResult<Json<MotionFrames>> {
    let clip = find_clip(&state, &id)?;
    Ok(Json(MotionFrames {
        summary: MotionSummary::of(clip),
        joints: Joint::ALL.iter().map(|j| j.name().to_string()).collect(),
        frames: clip
            .frames
            .iter()
            .map(|f| PlaybackFrame {
                t: f.t,
                pos: f.skeleton.positions().iter().map(|p| [p.x, p.y, p.z]).collect(),
            })
            .collect(),
    }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentPrediction {
    pub component: Component,
    pub predicted: Quality,
    pub confidence: f64,
    pub algorithm: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionResponse {
    pub motion_id: String,
    pub condition: Condition,
    pub predictions: Vec<ComponentPrediction>,
}

async fn prediction(
    State(state): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    params: Params,
) -> ApiResult<Json<PredictionResponse>> {
    let Query(params) = params?;
    let clip = find_clip(&state, &id)?;
    let condition = condition_param(&params)?;
    let requested: Option<Component> = parse_param(&params, "component")?;
    if !condition.allows_prediction() {
        return Err(ApiError::forbidden(format!("condition `{}` shows no predictions", condition.as_str())));
    }
    let components: Vec<Component> = match requested {
        Some(c) => vec![c],
        None => Component::ALL.to_vec(),
    };
    let mut predictions = Vec::new();
    for component in components {
        let model = state.models.get(&(clip.exercise, component)).ok_or_else(|| {
            ApiError::unavailable(format!("no model for {}", task_name(clip.exercise, component)))
        })?;
        let features = rehab_core::kinematics::extract(clip, component)?;
        let (predicted, confidence) = model.predict_vector(&features)?;
        predictions.push(ComponentPrediction {
            component,
            predicted,
            confidence,
            algorithm: model.algorithm.to_string(),
        });
    }
    Ok(Json(PredictionResponse {
        motion_id: clip.id.clone(),
        condition,
        predictions,
    }))
}

async fn analysis(
    State(state): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    params: Params,
) -> ApiResult<Response> {
    let Query(params) = params?;
    let clip = find_clip(&state, &id)?;
    let condition = condition_param(&params)?;
    let component: Component = parse_param(&params, "component")?
        .ok_or_else(|| ApiError::bad_request("component: required"))?;
    if !condition.allows_analysis() {
        return Err(ApiError::forbidden(format!(
            "condition `{}` shows no analysis",
            condition.as_str()
        )));
    }
    let task = (clip.exercise, component);
    let dataset = state.datasets.get(&task).ok_or_else(|| {
        ApiError::unavailable(format!("no training rows for {}", task_name(task.0, task.1)))
    })?;
    let training = dataset.filter(|r| r.subject != clip.subject.id);
    let unaffected = state.corpus.unaffected_clips(&clip.subject.id, clip.exercise);
    let payload = build_payload(&PayloadInputs {
        clip,
        component,
        unaffected: &unaffected,
        training: &training,
        model: state.models.get(&task),
        agent: state.agents.get(&task),
    })?;
    Ok(Json(payload).into_response())
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct AssessmentRequest {
    assessor: String,
    motion_id: String,
    scores: Scores,
    condition: Condition,
    timestamp_ms: Option<u64>,
}

fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

fn require_assessor(assessor: &str) -> ApiResult<()> {
    if assessor.trim().is_empty() {
        return Err(ApiError::bad_request("assessor: must not be empty"));
    }
    Ok(())
}

fn store_error(e: StoreError) -> ApiError {
    match e {
        StoreError::Duplicate => ApiError::new(
            StatusCode::CONFLICT,
            "conflict",
            "assessment already recorded for this assessor, motion and condition",
        ),
        StoreError::NonMonotonic { previous } => ApiError::bad_request(format!(
            "timestamp_ms: earlier than the session's previous event at {previous}"
        )),
        StoreError::Io(e) => ApiError::internal(e.to_string()),
    }
}

async fn post_assessment(State(state): State<Arc<AppState>>, body: Bytes) -> ApiResult<(StatusCode, Json<Assessment>)> {
    let req: AssessmentRequest = parse_body(&body)?;
    require_assessor(&req.assessor)?;
    for (name, v) in [
        ("rom", req.scores.rom),
        ("smoothness", req.scores.smoothness),
        ("compensation", req.scores.compensation),
    ] {
        if v > 2 {
            return Err(ApiError::bad_request(format!("scores.{name}: {v} is outside 0..=2")));
        }
    }
    find_clip(&state, &req.motion_id)?;
    let assessment = Assessment {
        assessor: req.assessor,
        motion_id: req.motion_id,
        scores: req.scores,
        condition: req.condition,
        timestamp_ms: req.timestamp_ms.unwrap_or_else(now_ms),
    };
    state.store.add_assessment(assessment.clone()).map_err(store_error)?;
    Ok((StatusCode::CREATED, Json(assessment)))
}

async fn list_assessments(State(state): State<Arc<AppState>>, params: Params) -> ApiResult<Json<Vec<Assessment>>> {
    let Query(params) = params?;
    Ok(Json(state.store.assessments(params.get("assessor").map(String::as_str))))
}

async fn post_event(State(state): State<Arc<AppState>>, body: Bytes) -> ApiResult<(StatusCode, Json<UiEvent>)> {
    let event: UiEvent = {
        let mut value: serde_json::Value = parse_body(&body)?;
        if let Some(obj) = value.as_object_mut() {
            obj.entry("timestamp_ms").or_insert_with(|| now_ms().into());
        }
        serde_json::from_value(value).map_err(|e| ApiError::bad_request(e.to_string()))?
    };
    require_assessor(&event.assessor)?;
    match (event.kind, event.tab) {
        (EventKind::TabEnter | EventKind::TabExit, None) => {
            return Err(ApiError::bad_request("tab: required for tab-enter and tab-exit"))
        }
        (EventKind::Play | EventKind::Pause | EventKind::Submit, Some(_)) => {
            return Err(ApiError::bad_request("tab: only allowed for tab-enter and tab-exit"))
        }
        _ => {}
    }
    find_clip(&state, &event.motion_id)?;
    state.store.add_event(event.clone()).map_err(store_error)?;
    Ok((StatusCode::CREATED, Json(event)))
}

async fn logs_summary(State(state): State<Arc<AppState>>) -> Json<crate::store::LogSummary> {
    Json(summarize(&state.store.events()))
}
