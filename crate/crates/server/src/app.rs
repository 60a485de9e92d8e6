use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::{Arc, RwLock};
use std::time::Instant;

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use convsearch_core::ckr::{AttributeSpec, KnowledgeBase};
use convsearch_core::dialog::{DialogState, PolicyConfig};
use convsearch_core::engine::{Correction, Domain, Engine, TurnAnalysis};
use convsearch_core::matcher::{EmbeddingTable, MatcherConfig};
use convsearch_core::nlg::Prompt;
use convsearch_core::nlu::{format_corpus, read_corpus, train, NaiveBayesModel, TrainingExample};
use convsearch_core::query::ResultSet;
use serde::{Deserialize, Serialize};
use serde_json::json;
use tokio::sync::{Mutex, OwnedMutexGuard};

use crate::error::{ApiError, ApiResult};
use crate::export::{export_training_dir, FEEDBACK_LOG, TRANSCRIPT_LOG};
use crate::log::AppendLog;
use crate::model::{
    now_secs, FeedbackInput, FeedbackRecord, Mode, Origin, PendingTurn, Rating, Session, SessionView, Speaker,
    TranscriptEntry, TranscriptTurn,
};

#[derive(Clone, Debug, Default)]
pub struct ServerConfig {
    pub data_dir: PathBuf,
    pub kb_path: Option<PathBuf>,
    /// Loaded at startup when it exists; `/admin/train` writes it back.
    pub model_path: Option<PathBuf>,
    pub embeddings_path: Option<PathBuf>,
    pub templates_path: Option<PathBuf>,
    pub policy: PolicyConfig,
    pub matcher: MatcherConfig,
    pub smoothing: Option<f64>,
}

/// The current domain and classifier; replaced as a unit.
#[derive(Clone)]
struct Artifacts {
    domain: Arc<Domain>,
    model: Arc<NaiveBayesModel>,
}

pub struct AppState {
    config: ServerConfig,
    embeddings: Option<Arc<EmbeddingTable>>,
    artifacts: RwLock<Option<Artifacts>>,
    sessions: RwLock<HashMap<String, Arc<Mutex<Session>>>>,
    transcripts: AppendLog,
    feedback: AppendLog,
}

impl std::fmt::Debug for AppState {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("AppState")
            .field("data_dir", &self.config.data_dir)
            .field("ready", &self.is_ready())
            .finish()
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CreatedSession {
    pub session: SessionView,
    /// The greeting, or `None` while a wizard has to approve it.
    pub prompt: Option<Prompt>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReplyStatus {
    Replied,
    Pending,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MessageReply {
    pub session_id: String,
    /// Transcript index of the user's turn.
    pub turn: usize,
    pub status: ReplyStatus,
    pub reply: Option<Prompt>,
    pub analysis: TurnAnalysis,
}

/// A held-back system turn, with what a wizard needs to judge it.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PendingProposal {
    pub session_id: String,
    pub turn: usize,
    pub user_text: Option<String>,
    pub analysis: Option<TurnAnalysis>,
    pub proposed_prompt: Prompt,
    pub state: DialogState,
    pub proposed_state: DialogState,
    pub results: ResultSet,
    pub entity_type: String,
    pub attributes: Vec<AttributeSpec>,
    pub ckr_fingerprint: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Accept,
    Correct(Correction),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct WizardSubmit {
    pub session_id: String,
    pub turn: usize,
    pub decision: Decision,
    /// Text sent to the user instead of the rendered prompt.
    #[serde(default)]
    pub prompt: Option<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IngestSummary {
    pub entity_type: String,
    pub ckr_fingerprint: String,
    pub records: usize,
    pub attributes: usize,
    pub bootstrapped_model: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrainSummary {
    pub examples: usize,
    pub labels: usize,
    pub vocabulary: usize,
}

impl AppState {
    /// Opens the logs and loads whatever the config points at. Without a KB
    /// the server starts not-ready and waits for `/admin/ingest`.
    pub fn new(config: ServerConfig) -> ApiResult<Self> {
        std::fs::create_dir_all(&config.data_dir)?;
        let embeddings = match &config.embeddings_path {
            Some(p) => Some(Arc::new(EmbeddingTable::from_path(p)?)),
            None => None,
        };
        let state = Self {
            transcripts: AppendLog::open(config.data_dir.join(TRANSCRIPT_LOG))?,
            feedback: AppendLog::open(config.data_dir.join(FEEDBACK_LOG))?,
            embeddings,
            artifacts: RwLock::new(None),
            sessions: RwLock::new(HashMap::new()),
            config,
        };
        if let Some(kb) = &state.config.kb_path {
            state.ingest(KnowledgeBase::from_path(kb)?)?;
        }
        Ok(state)
    }

    pub fn config(&self) -> &ServerConfig {
        &self.config
    }

    pub fn is_ready(&self) -> bool {
        self.read_artifacts().is_some()
    }

    fn read_artifacts(&self) -> Option<Artifacts> {
        self.artifacts.read().unwrap_or_else(|e| e.into_inner()).clone()
    }

    fn current(&self) -> ApiResult<Artifacts> {
        self.read_artifacts().ok_or(ApiError::NotReady)
    }

    fn engine(&self, domain: Arc<Domain>) -> ApiResult<Engine> {
        let model = self.current()?.model;
        Ok(Engine::new(domain, model, self.config.policy)?)
    }

    fn build_domain(&self, kb: KnowledgeBase) -> ApiResult<Domain> {
        let mut domain = Domain::build(kb, self.embeddings.clone(), &self.config.matcher)?;
        if let Some(p) = &self.config.templates_path {
            domain.templates.load_overrides_path(p)?;
        }
        Ok(domain)
    }

    /// Builds every artifact for `kb` off to the side, then swaps it in.
    /// Sessions already running keep the domain they started with.
    pub fn ingest(&self, kb: KnowledgeBase) -> ApiResult<IngestSummary> {
        let domain = Arc::new(self.build_domain(kb)?);
        let existing = self.read_artifacts().map(|a| a.model);
        let (model, bootstrapped) = match existing {
            Some(m) => (m, false),
            None => match &self.config.model_path {
                Some(p) if p.exists() => (Arc::new(NaiveBayesModel::from_path(p)?), false),
                _ => (Arc::new(domain.bootstrap_model()?), true),
            },
        };
        let summary = IngestSummary {
            entity_type: domain.ckr.entity_type.clone(),
            ckr_fingerprint: domain.ckr.fingerprint.clone(),
            records: domain.db.len(),
            attributes: domain.ckr.attributes.len(),
            bootstrapped_model: bootstrapped,
        };
        *self.artifacts.write().unwrap_or_else(|e| e.into_inner()) = Some(Artifacts { domain, model });
        tracing::info!(entity = %summary.entity_type, fingerprint = %summary.ckr_fingerprint, "domain swapped");
        Ok(summary)
    }

    /// Retrains on `examples`, delexicalizing with the current domain.
    pub fn train(&self, examples: &[TrainingExample]) -> ApiResult<TrainSummary> {
        let current = self.current()?;
        let model = train(examples, &current.domain.matcher, self.config.smoothing.unwrap_or(1.0))?;
        if let Some(p) = &self.config.model_path {
            std::fs::write(p, model.to_json())?;
        }
        let summary = TrainSummary {
            examples: examples.len(),
            labels: model.priors().len(),
            vocabulary: model.vocabulary().len(),
        };
        let mut guard = self.artifacts.write().unwrap_or_else(|e| e.into_inner());
        if let Some(a) = guard.as_mut() {
            a.model = Arc::new(model);
        }
        Ok(summary)
    }

    pub fn ckr_json(&self) -> ApiResult<serde_json::Value> {
        let ckr = &self.current()?.domain.ckr;
        Ok(serde_json::from_str(&ckr.to_canonical_json()).expect("canonical json parses"))
    }

    fn session(&self, id: &str) -> ApiResult<Arc<Mutex<Session>>> {
        self.sessions
            .read()
            .unwrap_or_else(|e| e.into_inner())
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::UnknownSession(id.to_string()))
    }

    fn log_turn(&self, session_id: &str, turn: &TranscriptTurn) -> ApiResult<()> {
        self.transcripts.append(&TranscriptEntry {
            session_id: session_id.to_string(),
            timestamp: now_secs(),
            turn: turn.clone(),
        })?;
        Ok(())
    }

    pub fn create_session(&self, mode: Mode) -> ApiResult<CreatedSession> {
        let current = self.current()?;
        let engine = self.engine(Arc::clone(&current.domain))?;
        let started = Instant::now();
        let (greeted, prompt) = engine.greet()?;
        let now = now_secs();
        let mut session = Session {
            id: uuid::Uuid::new_v4().to_string(),
            mode,
            domain: current.domain,
            state: engine.new_state(),
            transcript: Vec::new(),
            pending: None,
            created: now,
            updated: now,
        };
        let shown = match mode {
            Mode::Auto => {
                let turn = TranscriptTurn {
                    turn: 0,
                    speaker: Speaker::System,
                    text: prompt.text.clone(),
                    analysis: None,
                    prompt: Some(prompt.clone()),
                    latency_ms: started.elapsed().as_millis() as u64,
                };
                self.log_turn(&session.id, &turn)?;
                session.transcript.push(turn);
                session.state = greeted;
                Some(prompt)
            }
            Mode::Woz => {
                session.pending = Some(PendingTurn {
                    turn: 0,
                    user_text: None,
                    user_turn: None,
                    base_state: session.state.clone(),
                    proposed_state: greeted,
                    analysis: None,
                    prompt,
                    results: session.domain.db.all(),
                });
                None
            }
        };
        let view = session.view();
        self.sessions
            .write()
            .unwrap_or_else(|e| e.into_inner())
            .insert(session.id.clone(), Arc::new(Mutex::new(session)));
        Ok(CreatedSession { session: view, prompt: shown })
    }

    /// Takes a session's exclusive lock, as an in-flight message does.
    pub fn hold_session(&self, id: &str) -> ApiResult<OwnedMutexGuard<Session>> {
        self.session(id)?.try_lock_owned().map_err(|_| ApiError::Busy(id.to_string()))
    }

    pub async fn session_view(&self, id: &str) -> ApiResult<SessionView> {
        let session = self.session(id)?;
        let guard = session.lock().await;
        Ok(guard.view())
    }

    /// Runs the pipeline for one user message. A second message arriving
    /// while one is being processed is rejected rather than queued.
    pub fn post_message(&self, id: &str, text: &str) -> ApiResult<MessageReply> {
        let session = self.session(id)?;
        let mut guard = session.try_lock().map_err(|_| ApiError::Busy(id.to_string()))?;
        let s = &mut *guard;
        if s.pending.is_some() {
            return Err(ApiError::AwaitingWizard(id.to_string()));
        }
        let engine = self.engine(Arc::clone(&s.domain))?;
        let started = Instant::now();
        let user_turn = s.transcript.len();
        let outcome = engine.step(&s.state, text, user_turn)?;
        let latency_ms = started.elapsed().as_millis() as u64;

        let user = TranscriptTurn {
            turn: user_turn,
            speaker: Speaker::User,
            text: text.to_string(),
            analysis: Some(outcome.analysis.clone()),
            prompt: None,
            latency_ms: 0,
        };
        self.log_turn(&s.id, &user)?;
        s.transcript.push(user);
        s.updated = now_secs();

        let (status, reply) = match s.mode {
            Mode::Auto => {
                let system = TranscriptTurn {
                    turn: user_turn + 1,
                    speaker: Speaker::System,
                    text: outcome.prompt.text.clone(),
                    analysis: None,
                    prompt: Some(outcome.prompt.clone()),
                    latency_ms,
                };
                self.log_turn(&s.id, &system)?;
                s.transcript.push(system);
                s.state = outcome.state;
                (ReplyStatus::Replied, Some(outcome.prompt))
            }
            Mode::Woz => {
                s.pending = Some(PendingTurn {
                    turn: user_turn + 1,
                    user_text: Some(text.to_string()),
                    user_turn: Some(user_turn),
                    base_state: s.state.clone(),
                    proposed_state: outcome.state,
                    analysis: Some(outcome.analysis.clone()),
                    prompt: outcome.prompt,
                    results: outcome.results,
                });
                (ReplyStatus::Pending, None)
            }
        };
        Ok(MessageReply {
            session_id: s.id.clone(),
            turn: user_turn,
            status,
            reply,
            analysis: outcome.analysis,
        })
    }

    /// Every held-back turn, oldest session first.
    pub async fn pending(&self) -> Vec<PendingProposal> {
        let sessions: Vec<Arc<Mutex<Session>>> =
            self.sessions.read().unwrap_or_else(|e| e.into_inner()).values().cloned().collect();
        let mut out = Vec::new();
        for session in sessions {
            let s = session.lock().await;
            if let Some(p) = &s.pending {
                out.push((
                    s.created,
                    PendingProposal {
                        session_id: s.id.clone(),
                        turn: p.turn,
                        user_text: p.user_text.clone(),
                        analysis: p.analysis.clone(),
                        proposed_prompt: p.prompt.clone(),
                        state: p.base_state.clone(),
                        proposed_state: p.proposed_state.clone(),
                        results: p.results.clone(),
                        entity_type: s.domain.ckr.entity_type.clone(),
                        attributes: s.domain.ckr.attributes.clone(),
                        ckr_fingerprint: s.domain.ckr.fingerprint.clone(),
                    },
                ));
            }
        }
        out.sort_by(|a, b| (a.0, &a.1.session_id).cmp(&(b.0, &b.1.session_id)));
        out.into_iter().map(|(_, p)| p).collect()
    }

    /// Resolves a pending turn and records exactly one feedback record.
    pub fn submit(&self, req: &WizardSubmit) -> ApiResult<Prompt> {
        let session = self.session(&req.session_id)?;
        let mut guard = session.try_lock().map_err(|_| ApiError::Busy(req.session_id.clone()))?;
        let s = &mut *guard;
        let stale = || ApiError::StaleTurn {
            session: req.session_id.clone(),
            turn: req.turn,
        };
        let pending = s.pending.as_ref().filter(|p| p.turn == req.turn).ok_or_else(stale)?;
        let started = Instant::now();

        let (state, analysis, mut prompt, mut input) = match &req.decision {
            Decision::Accept => (
                pending.proposed_state.clone(),
                pending.analysis.clone(),
                pending.prompt.clone(),
                FeedbackInput {
                    turn: req.turn,
                    rating: Some(Rating::Up),
                    ..Default::default()
                },
            ),
            Decision::Correct(correction) => {
                if correction.intent.is_none() && correction.slots.is_none() {
                    return Err(ApiError::Invalid("a correction needs an intent or slots".into()));
                }
                let (Some(text), Some(user_turn)) = (&pending.user_text, pending.user_turn) else {
                    return Err(ApiError::Invalid("the greeting can only be accepted".into()));
                };
                let engine = self.engine(Arc::clone(&s.domain))?;
                let outcome = engine.step_with(&pending.base_state, text, user_turn, correction)?;
                (
                    outcome.state,
                    Some(outcome.analysis),
                    outcome.prompt,
                    FeedbackInput {
                        turn: req.turn,
                        corrected_intent: correction.intent,
                        corrected_slots: correction.slots.clone(),
                        ..Default::default()
                    },
                )
            }
        };
        if let Some(text) = req.prompt.as_ref().filter(|t| !t.trim().is_empty()) {
            prompt.text = text.clone();
            input.wizard_prompt = Some(text.clone());
        }

        let turn = TranscriptTurn {
            turn: req.turn,
            speaker: Speaker::Wizard,
            text: prompt.text.clone(),
            analysis,
            prompt: Some(prompt.clone()),
            latency_ms: started.elapsed().as_millis() as u64,
        };
        self.log_turn(&s.id, &turn)?;
        self.feedback.append(&FeedbackRecord {
            session_id: s.id.clone(),
            input,
            origin: Origin::Wizard,
            timestamp: now_secs(),
        })?;
        s.transcript.push(turn);
        s.state = state;
        s.pending = None;
        s.updated = now_secs();
        Ok(prompt)
    }

    pub async fn post_feedback(&self, id: &str, input: FeedbackInput) -> ApiResult<()> {
        if input.is_empty() {
            return Err(ApiError::Invalid(
                "feedback needs a corrected intent, corrected slots, a wizard prompt or a rating".into(),
            ));
        }
        let session = self.session(id)?;
        let s = session.lock().await;
        if input.turn >= s.transcript.len() {
            return Err(ApiError::UnknownTurn {
                session: id.to_string(),
                turn: input.turn,
            });
        }
        for c in input.corrected_slots.iter().flatten() {
            c.validate(&s.domain.ckr)?;
        }
        self.feedback.append(&FeedbackRecord {
            session_id: id.to_string(),
            input,
            origin: Origin::User,
            timestamp: now_secs(),
        })?;
        Ok(())
    }

    pub fn export_training(&self) -> ApiResult<Vec<TrainingExample>> {
        Ok(export_training_dir(&self.config.data_dir)?)
    }
}

type Shared = Arc<AppState>;

fn parse_body<T: for<'de> Deserialize<'de>>(body: &Bytes) -> ApiResult<T> {
    serde_json::from_slice(body).map_err(|e| ApiError::Invalid(format!("malformed request body: {e}")))
}

async fn blocking<T, F>(f: F) -> ApiResult<T>
where
    T: Send + 'static,
    F: FnOnce() -> ApiResult<T> + Send + 'static,
{
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::Invalid(format!("worker failed: {e}")))?
}

#[derive(Deserialize)]
struct CreateRequest {
    #[serde(default)]
    mode: Mode,
}

async fn create_session(State(app): State<Shared>, body: Bytes) -> ApiResult<(StatusCode, Json<CreatedSession>)> {
    let req: CreateRequest = if body.iter().all(u8::is_ascii_whitespace) {
        CreateRequest { mode: Mode::Auto }
    } else {
        parse_body(&body)?
    };
    let created = app.create_session(req.mode)?;
    tracing::info!(session = %created.session.id, mode = ?req.mode, "session created");
    Ok((StatusCode::CREATED, Json(created)))
}

#[derive(Deserialize)]
struct MessageRequest {
    text: String,
}

async fn post_message(State(app): State<Shared>, Path(id): Path<String>, body: Bytes) -> ApiResult<Json<MessageReply>> {
    let req: MessageRequest = parse_body(&body)?;
    Ok(Json(app.post_message(&id, &req.text)?))
}

async fn get_session(State(app): State<Shared>, Path(id): Path<String>) -> ApiResult<Json<SessionView>> {
    Ok(Json(app.session_view(&id).await?))
}

async fn woz_pending(State(app): State<Shared>) -> Json<Vec<PendingProposal>> {
    Json(app.pending().await)
}

async fn woz_submit(State(app): State<Shared>, body: Bytes) -> ApiResult<Json<Prompt>> {
    let req: WizardSubmit = parse_body(&body)?;
    Ok(Json(app.submit(&req)?))
}

async fn post_feedback(State(app): State<Shared>, Path(id): Path<String>, body: Bytes) -> ApiResult<Json<serde_json::Value>> {
    let input: FeedbackInput = parse_body(&body)?;
    app.post_feedback(&id, input).await?;
    Ok(Json(json!({ "status": "ok" })))
}

async fn export_training(State(app): State<Shared>) -> ApiResult<Json<serde_json::Value>> {
    let examples = app.export_training()?;
    Ok(Json(json!({ "corpus": format_corpus(&examples), "examples": examples })))
}

/// A KB given inline, or a path on the server's filesystem.
#[derive(Deserialize)]
#[serde(untagged)]
enum IngestRequest {
    Path { path: PathBuf },
    Inline(serde_json::Value),
}

async fn admin_ingest(State(app): State<Shared>, body: Bytes) -> ApiResult<Json<IngestSummary>> {
    let req: IngestRequest = parse_body(&body)?;
    let summary = blocking(move || {
        let kb = match req {
            IngestRequest::Path { path } => KnowledgeBase::from_path(path)?,
            IngestRequest::Inline(v) => KnowledgeBase::from_json(&v.to_string())?,
        };
        app.ingest(kb)
    })
    .await?;
    Ok(Json(summary))
}

#[derive(Deserialize)]
#[serde(untagged)]
enum TrainRequest {
    Path { path: PathBuf },
    Examples { examples: Vec<TrainingExample> },
}

async fn admin_train(State(app): State<Shared>, body: Bytes) -> ApiResult<Json<TrainSummary>> {
    let req: TrainRequest = parse_body(&body)?;
    let summary = blocking(move || {
        let examples = match req {
            TrainRequest::Path { path } => read_corpus(path)?,
            TrainRequest::Examples { examples } => examples,
        };
        app.train(&examples)
    })
    .await?;
    Ok(Json(summary))
}

async fn get_ckr(State(app): State<Shared>) -> ApiResult<Json<serde_json::Value>> {
    Ok(Json(app.ckr_json()?))
}

async fn health(State(app): State<Shared>) -> Response {
    match app.read_artifacts() {
        Some(a) => Json(json!({
            "status": "ready",
            "entity_type": a.domain.ckr.entity_type,
            "ckr_fingerprint": a.domain.ckr.fingerprint,
            "sessions": app.sessions.read().unwrap_or_else(|e| e.into_inner()).len(),
        }))
        .into_response(),
        None => (StatusCode::SERVICE_UNAVAILABLE, Json(json!({ "status": "not_ready" }))).into_response(),
    }
}

pub fn router(state: Shared) -> Router {
    Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/message", post(post_message))
        .route("/sessions/{id}/feedback", post(post_feedback))
        .route("/woz/pending", get(woz_pending))
        .route("/woz/submit", post(woz_submit))
        .route("/admin/export-training", post(export_training))
        .route("/admin/ingest", post(admin_ingest))
        .route("/admin/train", post(admin_train))
        .route("/ckr", get(get_ckr))
        .route("/health", get(health))
        .with_state(state)
}
