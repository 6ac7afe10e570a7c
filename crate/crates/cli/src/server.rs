//! Session-oriented HTTP service over the diagnosis engine.

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::{Arc, Mutex, RwLock};
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{Html, IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Serialize;
use serde_json::{json, Value};
use tokio::sync::OwnedMutexGuard;
use tower_http::services::ServeDir;

use cod_core::belief::{Backend, BeliefBackendConfig, LlmConfig};
use cod_core::engine::{
    Answer, Decision, DiagnosticTrace, Engine, EngineError, PatientMessage, Session, SessionConfig,
    TraceRound,
};
use cod_core::knowledge::DiseaseDB;
use cod_core::retriever::RetrieverModel;

pub const FINISHED_TTL: Duration = Duration::from_secs(10 * 60);
pub const IDLE_TTL: Duration = Duration::from_secs(60 * 60);
const SWEEP_EVERY: Duration = Duration::from_secs(30);

const PLACEHOLDER_INDEX: &str = "<!doctype html><title>Chain-of-diagnosis service</title>\
<p>No console assets are installed. The JSON API lives under <code>/api</code>: \
<code>POST /api/sessions</code>, <code>POST /api/sessions/{id}/answer</code>, \
<code>GET /api/sessions/{id}</code>, <code>GET /api/health</code>, <code>GET /api/config</code>.</p>";

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    /// Starting point for every new session; request fields override it.
    pub defaults: SessionConfig,
    pub finished_ttl: Duration,
    pub idle_ttl: Duration,
    pub static_dir: Option<PathBuf>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            defaults: SessionConfig::default(),
            finished_ttl: FINISHED_TTL,
            idle_ttl: IDLE_TTL,
            static_dir: None,
        }
    }
}

#[derive(Debug, Clone)]
struct SessionHandle {
    session_id: String,
    created_at: u64,
    cfg: SessionConfig,
    session: Session,
    last_step: Instant,
    finished_at: Option<Instant>,
}

struct Slot {
    /// Held for the whole of one engine step.
    step: Arc<tokio::sync::Mutex<()>>,
    /// Readers always see a whole round or none of it.
    data: RwLock<SessionHandle>,
}

/// In-memory sessions with lazy and periodic expiry.
pub struct SessionStore {
    slots: Mutex<HashMap<String, Arc<Slot>>>,
    finished_ttl: Duration,
    idle_ttl: Duration,
}

impl SessionStore {
    fn new(finished_ttl: Duration, idle_ttl: Duration) -> Self {
        Self {
            slots: Mutex::new(HashMap::new()),
            finished_ttl,
            idle_ttl,
        }
    }

    fn expired(&self, h: &SessionHandle, now: Instant) -> bool {
        h.finished_at.is_some_and(|f| now.duration_since(f) >= self.finished_ttl)
            || now.duration_since(h.last_step) >= self.idle_ttl
    }

    fn insert(&self, handle: SessionHandle) {
        let id = handle.session_id.clone();
        let slot = Arc::new(Slot {
            step: Arc::new(tokio::sync::Mutex::new(())),
            data: RwLock::new(handle),
        });
        self.slots.lock().unwrap().insert(id, slot);
    }

    fn get(&self, id: &str) -> Option<Arc<Slot>> {
        let mut slots = self.slots.lock().unwrap();
        let slot = slots.get(id)?.clone();
        if self.expired(&slot.data.read().unwrap(), Instant::now()) {
            slots.remove(id);
            return None;
        }
        Some(slot)
    }

    /// Drops expired sessions; returns how many were removed.
    pub fn evict_expired(&self) -> usize {
        let now = Instant::now();
        let mut slots = self.slots.lock().unwrap();
        let before = slots.len();
        slots.retain(|_, s| !self.expired(&s.data.read().unwrap(), now));
        before - slots.len()
    }

    pub fn len(&self) -> usize {
        self.slots.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Reserves the session's step lock, as an in-flight answer would.
    /// `None` when the session is unknown or already busy.
    pub fn try_reserve(&self, id: &str) -> Option<OwnedMutexGuard<()>> {
        self.get(id)?.step.clone().try_lock_owned().ok()
    }
}

pub struct AppState {
    pub db: Arc<DiseaseDB>,
    pub model: Arc<RetrieverModel>,
    pub config: ServiceConfig,
    pub store: SessionStore,
}

impl AppState {
    pub fn new(db: DiseaseDB, model: RetrieverModel, config: ServiceConfig) -> anyhow::Result<Arc<Self>> {
        model.check_bound(&db)?;
        config.defaults.validate()?;
        let store = SessionStore::new(config.finished_ttl, config.idle_ttl);
        Ok(Arc::new(Self {
            db: Arc::new(db),
            model: Arc::new(model),
            config,
            store,
        }))
    }
}

#[derive(Debug)]
struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self {
            status,
            message: message.into(),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self.message }))).into_response()
    }
}

impl From<EngineError> for ApiError {
    fn from(e: EngineError) -> Self {
        let status = match &e {
            EngineError::NoSymptoms => StatusCode::BAD_REQUEST,
            EngineError::InvalidConfig(_) => StatusCode::UNPROCESSABLE_ENTITY,
            EngineError::Finished | EngineError::NoPendingQuestion | EngineError::ExpectedAnswer => {
                StatusCode::CONFLICT
            }
            EngineError::Belief(_) => StatusCode::BAD_GATEWAY,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        Self::new(status, e.to_string())
    }
}

#[derive(Debug, Serialize)]
struct FinalPayload {
    disease: String,
    name: String,
    confidence: f64,
    treatment: String,
    forced: bool,
}

fn final_payload(db: &DiseaseDB, decision: &Decision) -> Option<FinalPayload> {
    let Decision::Diagnose {
        disease,
        confidence,
        forced,
    } = decision
    else {
        return None;
    };
    let rec = db.get(disease);
    Some(FinalPayload {
        disease: disease.clone(),
        name: rec.map(|r| r.name.clone()).unwrap_or_else(|| disease.clone()),
        confidence: *confidence,
        treatment: rec.map(|r| r.treatment.clone()).unwrap_or_default(),
        forced: *forced,
    })
}

fn status_of(session: &Session) -> &'static str {
    if session.finished() {
        "finished"
    } else {
        "awaiting_answer"
    }
}

fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

fn parse_body(body: &Bytes) -> Result<serde_json::Map<String, Value>, ApiError> {
    match serde_json::from_slice::<Value>(body) {
        Ok(Value::Object(map)) => Ok(map),
        Ok(_) => Err(ApiError::new(StatusCode::BAD_REQUEST, "request body must be a JSON object")),
        Err(e) => Err(ApiError::new(StatusCode::BAD_REQUEST, format!("malformed JSON: {e}"))),
    }
}

fn unprocessable(msg: impl Into<String>) -> ApiError {
    ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, msg)
}

/// Applies the optional request fields to the service defaults.
fn session_config(defaults: &SessionConfig, body: &serde_json::Map<String, Value>) -> Result<SessionConfig, ApiError> {
    let mut cfg = defaults.clone();
    if let Some(v) = body.get("tau").filter(|v| !v.is_null()) {
        cfg.tau = v.as_f64().ok_or_else(|| unprocessable("tau must be a number"))?;
    }
    if let Some(v) = body.get("max_rounds").filter(|v| !v.is_null()) {
        cfg.max_rounds = v
            .as_u64()
            .ok_or_else(|| unprocessable("max_rounds must be a non-negative integer"))? as usize;
    }
    if let Some(v) = body.get("k").filter(|v| !v.is_null()) {
        cfg.k = v.as_u64().ok_or_else(|| unprocessable("k must be a positive integer"))? as usize;
    }
    if let Some(v) = body.get("entropy_mode").filter(|v| !v.is_null()) {
        cfg.entropy_mode =
            serde_json::from_value(v.clone()).map_err(|_| unprocessable("entropy_mode must be present_only or expected"))?;
    }
    match body.get("backend") {
        None | Some(Value::Null) => {}
        Some(Value::String(name)) => {
            cfg.backend = match name.as_str() {
                "bayes" => BeliefBackendConfig::default(),
                "llm" => BeliefBackendConfig::Llm(LlmConfig::default()),
                other => return Err(unprocessable(format!("unknown backend '{other}'"))),
            }
        }
        Some(v) => {
            cfg.backend = serde_json::from_value(v.clone()).map_err(|e| unprocessable(format!("invalid backend: {e}")))?;
        }
    }
    cfg.validate().map_err(|e| unprocessable(e.to_string()))?;
    Ok(cfg)
}

/// Runs one engine step off the async runtime. The backend is built there
/// too, since the LLM transport is a blocking client.
async fn run_step(
    state: &Arc<AppState>,
    cfg: SessionConfig,
    mut session: Session,
    msg: PatientMessage,
) -> Result<Session, ApiError> {
    let state = state.clone();
    tokio::task::spawn_blocking(move || -> Result<Session, ApiError> {
        let backend = Backend::from_config(&cfg.backend).map_err(|e| unprocessable(e.to_string()))?;
        let engine = Engine::new(&state.db, &state.model, &backend, &cfg)?;
        session.advance(&engine, &msg)?;
        Ok(session)
    })
    .await
    .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, format!("step task failed: {e}")))?
}

fn round_body(db: &DiseaseDB, session_id: &str, round_key: &str, session: &Session) -> Value {
    let round: &TraceRound = session.trace.rounds.last().expect("a step always records a round");
    json!({
        "session_id": session_id,
        round_key: round,
        "status": status_of(session),
        "final": final_payload(db, &round.decision),
    })
}

async fn create_session(State(state): State<Arc<AppState>>, body: Bytes) -> Result<Response, ApiError> {
    let body = parse_body(&body)?;
    let symptoms: Vec<String> = match body.get("symptoms") {
        Some(Value::Array(items)) => items
            .iter()
            .map(|v| v.as_str().map(String::from))
            .collect::<Option<_>>()
            .ok_or_else(|| ApiError::new(StatusCode::BAD_REQUEST, "symptoms must be a list of strings"))?,
        _ => return Err(ApiError::new(StatusCode::BAD_REQUEST, "symptoms must be a list of strings")),
    };
    let cfg = session_config(&state.config.defaults, &body)?;
    if symptoms.iter().all(|s| s.trim().is_empty()) {
        return Err(ApiError::new(StatusCode::BAD_REQUEST, "at least one symptom is required"));
    }

    let session = Session {
        state: cod_core::engine::DialogueState::new(cfg.k),
        trace: DiagnosticTrace::default(),
    };
    let session = run_step(&state, cfg.clone(), session, PatientMessage::Symptoms(symptoms)).await?;
    let session_id = uuid::Uuid::new_v4().simple().to_string();
    let now = Instant::now();
    let body = round_body(&state.db, &session_id, "round_1", &session);
    state.store.insert(SessionHandle {
        session_id: session_id.clone(),
        created_at: unix_now(),
        cfg,
        finished_at: session.finished().then_some(now),
        session,
        last_step: now,
    });
    log::info!("session {session_id} created");
    Ok((StatusCode::CREATED, Json(body)).into_response())
}

fn parse_answer(body: &Bytes) -> Result<Answer, ApiError> {
    let bad = || ApiError::new(StatusCode::BAD_REQUEST, "answer must be \"yes\" or \"no\"");
    let body = parse_body(body)?;
    match body.get("answer").and_then(Value::as_str).map(|s| s.trim().to_ascii_lowercase()) {
        Some(a) if a == "yes" => Ok(Answer::Yes),
        Some(a) if a == "no" => Ok(Answer::No),
        _ => Err(bad()),
    }
}

fn unknown_session(id: &str) -> ApiError {
    ApiError::new(StatusCode::NOT_FOUND, format!("no live session '{id}'"))
}

async fn answer(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Json<Value>, ApiError> {
    let slot = state.store.get(&id).ok_or_else(|| unknown_session(&id))?;
    let answer = parse_answer(&body)?;
    let _guard = slot
        .step
        .clone()
        .try_lock_owned()
        .map_err(|_| ApiError::new(StatusCode::CONFLICT, "another answer for this session is in flight"))?;
    let (cfg, session) = {
        let h = slot.data.read().unwrap();
        if h.session.finished() {
            return Err(ApiError::new(StatusCode::CONFLICT, "session already finished"));
        }
        (h.cfg.clone(), h.session.clone())
    };
    let session = run_step(&state, cfg, session, PatientMessage::Answer(answer)).await?;
    let body = round_body(&state.db, &id, "round", &session);
    let mut h = slot.data.write().unwrap();
    let now = Instant::now();
    h.last_step = now;
    if session.finished() {
        h.finished_at = Some(now);
    }
    h.session = session;
    Ok(Json(body))
}

async fn get_session(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Json<Value>, ApiError> {
    let slot = state.store.get(&id).ok_or_else(|| unknown_session(&id))?;
    let h = slot.data.read().unwrap();
    let s = &h.session;
    Ok(Json(json!({
        "session_id": h.session_id,
        "created_at": h.created_at,
        "status": status_of(s),
        "rounds": s.trace.rounds.len(),
        "inquiries": s.trace.n_inquiries(),
        "pending_question": s.state.pending,
        "config": h.cfg,
        "trace": s.trace,
        "final": s.trace.final_decision().and_then(|d| final_payload(&state.db, d)),
    })))
}

async fn health(State(state): State<Arc<AppState>>) -> Json<Value> {
    Json(json!({
        "status": "ok",
        "diseases": state.db.len(),
        "symptoms": state.db.symptom_vocab().len(),
        "live_sessions": state.store.len(),
    }))
}

async fn config(State(state): State<Arc<AppState>>) -> Json<Value> {
    let diseases: Vec<Value> = state
        .db
        .diseases()
        .iter()
        .map(|d| json!({ "id": d.id, "name": d.name, "department": d.department }))
        .collect();
    Json(json!({
        "vocabulary": state.db.symptom_vocab(),
        "diseases": diseases,
        "defaults": state.config.defaults,
        "llm_available": !LlmConfig::default().endpoint.is_empty(),
    }))
}

pub fn router(state: Arc<AppState>) -> Router {
    let api = Router::new()
        .route("/api/sessions", post(create_session))
        .route("/api/sessions/{id}", get(get_session))
        .route("/api/sessions/{id}/answer", post(answer))
        .route("/api/health", get(health))
        .route("/api/config", get(config));
    let app = match &state.config.static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api.route("/", get(|| async { Html(PLACEHOLDER_INDEX) })),
    };
    app.with_state(state)
}

/// Binds and serves until interrupted, sweeping expired sessions in the background.
pub async fn serve(state: Arc<AppState>, listen: &str) -> anyhow::Result<()> {
    let sweeper = state.clone();
    tokio::spawn(async move {
        let mut tick = tokio::time::interval(SWEEP_EVERY);
        loop {
            tick.tick().await;
            let n = sweeper.store.evict_expired();
            if n > 0 {
                log::info!("evicted {n} expired sessions");
            }
        }
    });
    let listener = tokio::net::TcpListener::bind(listen).await?;
    log::info!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
