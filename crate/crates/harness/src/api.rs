//! Local HTTP+JSON service: one simulated mechanism per session, with
//! demonstration upload, segmentation, augmentation and execution runs whose
//! frames are fetched by polling. Payloads are described in
//! `schema/api.schema.json`.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};

use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use lfd_core::control::{run_sequencer, TraceFrame};
use lfd_core::demo_pipeline::{
    augment_contact, segment_trajectory, AugmentParams, AugmentedPlan, DemoTrajectory,
    ForceHypothesisResult, Segment, SegmentationParams,
};
use lfd_core::mechanism::{
    load_fixture, Episode, MechanismModel, MechanismState, SimParams, FIXTURE_IDS,
};
use lfd_core::perception::SceneSpec;
use lfd_core::Pose;

/// Frames returned per page when the client gives no limit.
pub const DEFAULT_PAGE: usize = 500;

#[derive(Debug, Clone, Serialize)]
pub struct ApiError {
    #[serde(skip)]
    status: StatusCode,
    pub code: &'static str,
    pub message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            code,
            message: message.into(),
        }
    }

    fn not_found(what: &str) -> Self {
        Self::new(
            StatusCode::NOT_FOUND,
            "not_found",
            format!("{what} not found"),
        )
    }

    fn invalid(message: impl Into<String>) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid", message)
    }

    fn conflict(message: impl Into<String>) -> Self {
        Self::new(StatusCode::CONFLICT, "conflict", message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = self.status;
        (status, Json(serde_json::json!({ "error": self }))).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunKind {
    Augment,
    Execute,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Running,
    Succeeded,
    Failed,
}

impl RunStatus {
    pub fn is_terminal(&self) -> bool {
        !matches!(self, RunStatus::Running)
    }
}

/// One simulation frame as served to clients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub index: usize,
    pub t: f64,
    pub ee_pose: Pose,
    /// Force then torque, base frame.
    pub wrench: [f64; 6],
    pub q: Vec<f64>,
    pub phase: usize,
    /// Blocked signed axes: +x, -x, +y, -y, +z, -z.
    pub contact: [bool; 6],
}

impl Frame {
    fn from_trace(index: usize, f: &TraceFrame) -> Self {
        let mut wrench = [0.0; 6];
        wrench.copy_from_slice(f.wrench.as_slice());
        Self {
            index,
            t: f.t,
            ee_pose: f.ee_pose,
            wrench,
            q: f.q.clone(),
            phase: f.phase,
            contact: f.blocked,
        }
    }
}

#[derive(Debug, Clone)]
struct Run {
    kind: RunKind,
    status: RunStatus,
    frames: Vec<Frame>,
    hypotheses: Vec<ForceHypothesisResult>,
    plan: Option<AugmentedPlan>,
    error: Option<String>,
}

impl Run {
    fn running(kind: RunKind) -> Self {
        Self {
            kind,
            status: RunStatus::Running,
            frames: Vec::new(),
            hypotheses: Vec::new(),
            plan: None,
            error: None,
        }
    }
}

struct Session {
    fixture: String,
    model: Arc<MechanismModel>,
    state: MechanismState,
    demo: Option<DemoTrajectory>,
    segmentation: SegmentationParams,
    segments: Vec<Segment>,
    plan: Option<AugmentedPlan>,
    runs: Vec<Arc<RwLock<Run>>>,
}

#[derive(Default)]
pub struct AppState {
    sessions: RwLock<HashMap<String, Arc<Mutex<Session>>>>,
    next_id: AtomicU64,
}

impl AppState {
    fn session(&self, id: &str) -> ApiResult<Arc<Mutex<Session>>> {
        self.sessions
            .read()
            .expect("session table")
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::not_found("session"))
    }
}

fn lock(s: &Mutex<Session>) -> std::sync::MutexGuard<'_, Session> {
    s.lock().unwrap_or_else(|e| e.into_inner())
}

pub fn router() -> Router {
    router_with_state(Arc::new(AppState::default()))
}

pub fn router_with_state(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}/scene", get(scene))
        .route("/sessions/{id}/demonstration", post(demonstration))
        .route("/sessions/{id}/segment", post(segment))
        .route("/sessions/{id}/augment", post(augment))
        .route("/sessions/{id}/execute", post(execute))
        .route("/sessions/{id}/runs/{rid}", get(run_status))
        .route("/sessions/{id}/runs/{rid}/frames", get(frames))
        .route("/sessions/{id}/runs/{rid}/hypotheses", get(hypotheses))
        .with_state(state)
}

/// Serves the API until the process is stopped.
pub async fn serve_api(addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router()).await
}

#[derive(Debug, Deserialize)]
pub struct CreateSession {
    pub fixture: String,
}

#[derive(Debug, Serialize)]
pub struct SessionCreated {
    pub id: String,
    pub fixture: String,
}

async fn create_session(
    State(app): State<Arc<AppState>>,
    body: Option<Json<CreateSession>>,
) -> ApiResult<(StatusCode, Json<SessionCreated>)> {
    let Some(Json(body)) = body else {
        return Err(ApiError::invalid("body must be {\"fixture\": <id>}"));
    };
    if !FIXTURE_IDS.contains(&body.fixture.as_str()) {
        return Err(ApiError::invalid(format!(
            "unknown fixture {:?}; known: {FIXTURE_IDS:?}",
            body.fixture
        )));
    }
    let model =
        Arc::new(load_fixture(&body.fixture).map_err(|e| ApiError::invalid(e.to_string()))?);
    let state = MechanismState::attached(&model).map_err(|e| ApiError::invalid(e.to_string()))?;
    let id = format!("s{}", app.next_id.fetch_add(1, Ordering::Relaxed) + 1);
    let session = Session {
        fixture: body.fixture.clone(),
        model,
        state,
        demo: None,
        segmentation: SegmentationParams::default(),
        segments: Vec::new(),
        plan: None,
        runs: Vec::new(),
    };
    app.sessions
        .write()
        .expect("session table")
        .insert(id.clone(), Arc::new(Mutex::new(session)));
    Ok((
        StatusCode::CREATED,
        Json(SessionCreated {
            id,
            fixture: body.fixture,
        }),
    ))
}

#[derive(Debug, Serialize)]
pub struct SceneView {
    pub fixture: String,
    pub mechanism: MechanismModel,
    pub q: Vec<f64>,
    pub ee_pose: Pose,
    pub goal_reached: bool,
    pub sketch_plane: String,
    pub scene: SceneSpec,
}

async fn scene(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> ApiResult<Json<SceneView>> {
    let s = app.session(&id)?;
    let s = lock(&s);
    let scene = SceneSpec::for_mechanism(&s.model, &s.state.q)
        .map_err(|e| ApiError::invalid(e.to_string()))?;
    Ok(Json(SceneView {
        fixture: s.fixture.clone(),
        mechanism: (*s.model).clone(),
        q: s.state.q.clone(),
        ee_pose: s.state.ee_pose,
        goal_reached: s.model.goal_reached(&s.state.q),
        sketch_plane: s.model.sketch_plane.clone(),
        scene,
    }))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SegmentSummary {
    pub index: usize,
    pub start: Vector3<f64>,
    pub direction: Vector3<f64>,
    pub span: (usize, usize),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Segmentation {
    pub k: usize,
    pub segments: Vec<SegmentSummary>,
}

fn summarize(segments: &[Segment]) -> Segmentation {
    Segmentation {
        k: segments.len(),
        segments: segments
            .iter()
            .map(|s| SegmentSummary {
                index: s.index,
                start: s.start,
                direction: s.direction,
                span: s.span,
            })
            .collect(),
    }
}

async fn demonstration(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Option<Json<serde_json::Value>>,
) -> ApiResult<Json<Segmentation>> {
    let s = app.session(&id)?;
    let Some(Json(body)) = body else {
        return Err(ApiError::invalid("body must be a demonstration trajectory"));
    };
    let demo: DemoTrajectory =
        serde_json::from_value(body).map_err(|e| ApiError::invalid(e.to_string()))?;
    demo.validate()
        .map_err(|e| ApiError::invalid(e.to_string()))?;
    let mut s = lock(&s);
    let segments =
        segment_trajectory(&demo, &s.segmentation).map_err(|e| ApiError::invalid(e.to_string()))?;
    let out = summarize(&segments);
    s.demo = Some(demo);
    s.segments = segments;
    s.plan = None;
    Ok(Json(out))
}

#[derive(Debug, Default, Deserialize)]
pub struct SegmentRequest {
    #[serde(default)]
    pub params: Option<SegmentationParams>,
}

async fn segment(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Option<Json<SegmentRequest>>,
) -> ApiResult<Json<Segmentation>> {
    let s = app.session(&id)?;
    let mut s = lock(&s);
    let params = body.and_then(|b| b.0.params).unwrap_or(s.segmentation);
    let demo = s
        .demo
        .as_ref()
        .ok_or_else(|| ApiError::conflict("no demonstration uploaded"))?;
    let segments =
        segment_trajectory(demo, &params).map_err(|e| ApiError::invalid(e.to_string()))?;
    let out = summarize(&segments);
    s.segmentation = params;
    s.segments = segments;
    s.plan = None;
    Ok(Json(out))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct RunCreated {
    pub run_id: usize,
}

#[derive(Debug, Default, Deserialize)]
pub struct AugmentRequest {
    #[serde(default)]
    pub params: Option<AugmentParams>,
}

fn start_run(s: &mut Session, kind: RunKind) -> (usize, Arc<RwLock<Run>>) {
    let run = Arc::new(RwLock::new(Run::running(kind)));
    s.runs.push(run.clone());
    (s.runs.len() - 1, run)
}

async fn augment(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Option<Json<AugmentRequest>>,
) -> ApiResult<(StatusCode, Json<RunCreated>)> {
    let session = app.session(&id)?;
    let params = body.and_then(|b| b.0.params).unwrap_or_default();
    let (rid, run, model, segments, end) = {
        let mut s = lock(&session);
        if s.segments.is_empty() {
            return Err(ApiError::conflict(
                "no segmentation; upload a demonstration first",
            ));
        }
        let end = s
            .demo
            .as_ref()
            .and_then(|d| d.positions().last().copied())
            .unwrap_or_default();
        let (rid, run) = start_run(&mut s, RunKind::Augment);
        (rid, run, s.model.clone(), s.segments.clone(), end)
    };
    tokio::task::spawn_blocking(move || {
        let result = Episode::new(model, SimParams::default())
            .map_err(|e| e.to_string())
            .and_then(|mut ep| {
                augment_contact(&mut ep, &segments, &end, &params).map_err(|e| e.to_string())
            });
        let mut r = run.write().expect("run");
        match result {
            Ok(out) => {
                r.frames = out
                    .trace
                    .iter()
                    .enumerate()
                    .map(|(i, f)| Frame::from_trace(i, f))
                    .collect();
                r.hypotheses = out.hypotheses;
                r.plan = Some(out.plan.clone());
                r.status = RunStatus::Succeeded;
                drop(r);
                lock(&session).plan = Some(out.plan);
            }
            Err(e) => {
                r.error = Some(e);
                r.status = RunStatus::Failed;
            }
        }
    });
    Ok((StatusCode::ACCEPTED, Json(RunCreated { run_id: rid })))
}

#[derive(Debug, Default, Deserialize)]
pub struct ExecuteRequest {
    /// Plan to run; defaults to the session's latest augmented plan.
    #[serde(default)]
    pub plan: Option<serde_json::Value>,
}

async fn execute(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Option<Json<ExecuteRequest>>,
) -> ApiResult<(StatusCode, Json<RunCreated>)> {
    let session = app.session(&id)?;
    let given = match body.and_then(|b| b.0.plan) {
        Some(v) => Some(
            AugmentedPlan::from_json(&v.to_string())
                .map_err(|e| ApiError::invalid(e.to_string()))?,
        ),
        None => None,
    };
    let (rid, run, model, plan) = {
        let mut s = lock(&session);
        let plan = given
            .or_else(|| s.plan.clone())
            .ok_or_else(|| ApiError::conflict("no plan; run augmentation or send one"))?;
        let (rid, run) = start_run(&mut s, RunKind::Execute);
        (rid, run, s.model.clone(), plan)
    };
    tokio::task::spawn_blocking(move || {
        let template = AugmentParams::default().controller;
        let result = Episode::new(model, SimParams::default())
            .map_err(|e| e.to_string())
            .and_then(|mut ep| {
                run_sequencer(&plan.sequencer_spec(&template), &mut ep)
                    .map(|o| (o, ep.state))
                    .map_err(|e| e.to_string())
            });
        let mut r = run.write().expect("run");
        r.plan = Some(plan);
        match result {
            Ok((out, state)) => {
                r.frames = out
                    .trace
                    .iter()
                    .enumerate()
                    .map(|(i, f)| Frame::from_trace(i, f))
                    .collect();
                r.status = if out.success {
                    RunStatus::Succeeded
                } else {
                    r.error = Some(format!("goal not reached ({:?})", out.reason));
                    RunStatus::Failed
                };
                drop(r);
                lock(&session).state = state;
            }
            Err(e) => {
                r.error = Some(e);
                r.status = RunStatus::Failed;
            }
        }
    });
    Ok((StatusCode::ACCEPTED, Json(RunCreated { run_id: rid })))
}

fn find_run(app: &AppState, id: &str, rid: usize) -> ApiResult<Arc<RwLock<Run>>> {
    let s = app.session(id)?;
    let s = lock(&s);
    s.runs
        .get(rid)
        .cloned()
        .ok_or_else(|| ApiError::not_found("run"))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct RunInfo {
    pub run_id: usize,
    pub kind: RunKind,
    pub status: RunStatus,
    pub frames: usize,
    pub error: Option<String>,
    pub plan: Option<AugmentedPlan>,
}

async fn run_status(
    State(app): State<Arc<AppState>>,
    Path((id, rid)): Path<(String, usize)>,
) -> ApiResult<Json<RunInfo>> {
    let run = find_run(&app, &id, rid)?;
    let r = run.read().expect("run");
    Ok(Json(RunInfo {
        run_id: rid,
        kind: r.kind,
        status: r.status,
        frames: r.frames.len(),
        error: r.error.clone(),
        plan: r.plan.clone(),
    }))
}

#[derive(Debug, Deserialize)]
pub struct Page {
    #[serde(default)]
    pub from: usize,
    pub limit: Option<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct FramePage {
    pub run_id: usize,
    pub status: RunStatus,
    pub from: usize,
    /// Index to request next; equals `total` once everything was served.
    pub next: usize,
    pub total: usize,
    pub frames: Vec<Frame>,
}

async fn frames(
    State(app): State<Arc<AppState>>,
    Path((id, rid)): Path<(String, usize)>,
    Query(page): Query<Page>,
) -> ApiResult<Json<FramePage>> {
    let run = find_run(&app, &id, rid)?;
    let r = run.read().expect("run");
    let limit = page.limit.unwrap_or(DEFAULT_PAGE).max(1);
    let from = page.from.min(r.frames.len());
    let to = (from + limit).min(r.frames.len());
    Ok(Json(FramePage {
        run_id: rid,
        status: r.status,
        from,
        next: to,
        total: r.frames.len(),
        frames: r.frames[from..to].to_vec(),
    }))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct HypothesisList {
    pub run_id: usize,
    pub status: RunStatus,
    pub hypotheses: Vec<ForceHypothesisResult>,
}

async fn hypotheses(
    State(app): State<Arc<AppState>>,
    Path((id, rid)): Path<(String, usize)>,
) -> ApiResult<Json<HypothesisList>> {
    let run = find_run(&app, &id, rid)?;
    let r = run.read().expect("run");
    if r.kind != RunKind::Augment {
        return Err(ApiError::conflict("only augmentation runs test hypotheses"));
    }
    Ok(Json(HypothesisList {
        run_id: rid,
        status: r.status,
        hypotheses: r.hypotheses.clone(),
    }))
}
