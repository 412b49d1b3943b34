//! HTTP API for running a study live and retrieving its analysis.
//!
//! Every route lives under `/v1`. Callers authenticate with
//! `Authorization: Bearer <token>`; a token is bound to one study and one
//! role (researcher, participant session, or annotator). Tokens are kept in
//! `tokens.json` under the store root so they survive restarts.

use std::collections::BTreeMap;
use std::fs;
use std::path::PathBuf;
use std::sync::{Arc, RwLock};

use axum::extract::{Path, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::instruments::{InstrumentRegistry, ResponseKind};
use crate::knowledge_gain::study_agreement;
use crate::model::{
    ItemResponse, Participant, Phase, Session, SessionState, Study, StudyDesign, SummaryDocument,
    SummaryRating,
};
use crate::report::{analyze, render, ReportFormat};
use crate::storage::StudyStore;
use crate::Error;

pub const TOKENS_FILE: &str = "tokens.json";

/// Demographic attributes requested with the pre-search questionnaire.
pub const DEMOGRAPHIC_FIELDS: [&str; 3] =
    ["age_band", "search_experience", "conversational_agent_use"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "role", rename_all = "snake_case")]
pub enum Grant {
    Researcher {
        study_id: String,
    },
    Participant {
        study_id: String,
        session_id: String,
    },
    Annotator {
        study_id: String,
        annotator_id: String,
    },
}

impl Grant {
    pub fn study_id(&self) -> &str {
        match self {
            Grant::Researcher { study_id }
            | Grant::Participant { study_id, .. }
            | Grant::Annotator { study_id, .. } => study_id,
        }
    }
}

/// Capability tokens, persisted as one JSON document.
pub struct TokenStore {
    path: PathBuf,
    grants: RwLock<BTreeMap<String, Grant>>,
}

impl TokenStore {
    pub fn open(root: &std::path::Path) -> crate::Result<Self> {
        let path = root.join(TOKENS_FILE);
        let grants = match fs::read_to_string(&path) {
            Ok(text) => serde_json::from_str(&text)
                .map_err(|e| Error::parse(path.display().to_string(), e))?,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => BTreeMap::new(),
            Err(e) => return Err(Error::io(&path, e)),
        };
        Ok(TokenStore {
            path,
            grants: RwLock::new(grants),
        })
    }

    pub fn get(&self, token: &str) -> Option<Grant> {
        self.grants.read().expect("token lock").get(token).cloned()
    }

    /// Issues a new token for `grant` and persists the token table.
    pub fn mint(&self, grant: Grant) -> crate::Result<String> {
        let token = hex::encode(rand::rng().random::<[u8; 16]>());
        let mut grants = self.grants.write().expect("token lock");
        grants.insert(token.clone(), grant);
        let text = crate::storage::canonical_json(&*grants);
        let tmp = self.path.with_extension("json.tmp");
        fs::write(&tmp, text).map_err(|e| Error::io(&tmp, e))?;
        fs::rename(&tmp, &self.path).map_err(|e| Error::io(&self.path, e))?;
        Ok(token)
    }

    pub fn researcher_token(&self, study_id: &str) -> Option<String> {
        self.grants
            .read()
            .expect("token lock")
            .iter()
            .find(|(_, g)| matches!(g, Grant::Researcher { study_id: s } if s == study_id))
            .map(|(t, _)| t.clone())
    }
}

#[derive(Clone)]
pub struct AppState {
    pub store: Arc<StudyStore>,
    pub tokens: Arc<TokenStore>,
}

impl AppState {
    pub fn open(root: impl Into<PathBuf>) -> crate::Result<Self> {
        let store = StudyStore::open(root)?;
        let tokens = TokenStore::open(store.root())?;
        Ok(AppState {
            store: Arc::new(store),
            tokens: Arc::new(tokens),
        })
    }

    /// Makes sure every stored study has a researcher token; returns
    /// `(study_id, token)` for each study.
    pub fn ensure_researcher_tokens(&self) -> crate::Result<Vec<(String, String)>> {
        let mut out = Vec::new();
        for id in self.store.study_ids() {
            let token = match self.tokens.researcher_token(&id) {
                Some(t) => t,
                None => self.tokens.mint(Grant::Researcher {
                    study_id: id.clone(),
                })?,
            };
            out.push((id, token));
        }
        Ok(out)
    }
}

/// An error response: status plus a JSON body with `error` and `message`.
#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    body: Value,
}

impl ApiError {
    fn new(status: StatusCode, error: &str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            body: json!({ "error": error, "message": message.into() }),
        }
    }

    fn unauthorized() -> Self {
        ApiError::new(
            StatusCode::UNAUTHORIZED,
            "unauthorized",
            "missing or unknown token",
        )
    }

    fn forbidden() -> Self {
        ApiError::new(
            StatusCode::FORBIDDEN,
            "forbidden",
            "token does not grant this action",
        )
    }

    fn not_found(what: impl Into<String>) -> Self {
        ApiError::new(StatusCode::NOT_FOUND, "not_found", what)
    }

    fn conflict(message: impl Into<String>) -> Self {
        ApiError::new(StatusCode::CONFLICT, "conflict", message)
    }

    fn invalid(message: impl Into<String>) -> Self {
        ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid", message)
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let message = e.to_string();
        match e {
            Error::Validation(report) => ApiError {
                status: StatusCode::UNPROCESSABLE_ENTITY,
                body: json!({
                    "error": "validation",
                    "message": "study is invalid",
                    "violations": report.violations,
                }),
            },
            Error::AlreadyExists(_) => ApiError::conflict(message),
            Error::ReAnnotationRequired { kappas } => {
                let kappa: BTreeMap<String, Option<f64>> =
                    kappas.into_iter().map(|k| (k.dimension, k.kappa)).collect();
                ApiError {
                    status: StatusCode::CONFLICT,
                    body: json!({ "error": "reannotation_required", "message": message, "kappa": kappa }),
                }
            }
            Error::Io { .. } => ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "io", message),
            _ => ApiError::invalid(message),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

fn bearer(headers: &HeaderMap) -> Option<&str> {
    headers
        .get(header::AUTHORIZATION)?
        .to_str()
        .ok()?
        .strip_prefix("Bearer ")
        .map(str::trim)
}

fn grant(state: &AppState, headers: &HeaderMap) -> ApiResult<Grant> {
    bearer(headers)
        .and_then(|t| state.tokens.get(t))
        .ok_or_else(ApiError::unauthorized)
}

/// Runs blocking store work off the async executor.
async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> ApiResult<T> + Send + 'static,
) -> ApiResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))?
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/v1/studies", post(create_study))
        .route("/v1/studies/{study_id}/sessions", post(create_session))
        .route("/v1/studies/{study_id}/annotators", post(create_annotator))
        .route("/v1/studies/{study_id}/summaries", get(list_summaries))
        .route("/v1/studies/{study_id}/agreement", get(agreement))
        .route("/v1/studies/{study_id}/analysis", get(analysis))
        .route("/v1/session/next", get(next_step))
        .route("/v1/session/responses", post(submit_responses))
        .route("/v1/session/summary", post(submit_summary))
        .route("/v1/session/task", post(complete_task))
        .route("/v1/session/close", post(close_session))
        .route("/v1/ratings", post(submit_rating))
        .with_state(state)
}

/// Serves `router` on `listener` until `shutdown` resolves, then records the
/// shutdown in the store journal.
pub async fn serve(
    listener: tokio::net::TcpListener,
    state: AppState,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    let store = state.store.clone();
    axum::serve(listener, router(state))
        .with_graceful_shutdown(shutdown)
        .await?;
    store.close().map_err(std::io::Error::other)
}

fn require_study(state: &AppState, study_id: &str) -> ApiResult<()> {
    if state.store.contains(study_id) {
        Ok(())
    } else {
        Err(ApiError::not_found(format!("unknown study `{study_id}`")))
    }
}

fn require_researcher(state: &AppState, headers: &HeaderMap, study_id: &str) -> ApiResult<()> {
    match grant(state, headers)? {
        Grant::Researcher { study_id: s } if s == study_id => Ok(()),
        _ => Err(ApiError::forbidden()),
    }
}

async fn create_study(
    State(state): State<AppState>,
    Json(design): Json<StudyDesign>,
) -> ApiResult<Response> {
    blocking(move || {
        let study = Study::new(design);
        let id = study.design.study_id.clone();
        state.store.create(&study)?;
        let token = state.tokens.mint(Grant::Researcher {
            study_id: id.clone(),
        })?;
        Ok((
            StatusCode::CREATED,
            Json(json!({ "study_id": id, "researcher_token": token })),
        )
            .into_response())
    })
    .await
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct NewSession {
    #[serde(default)]
    session_id: Option<String>,
    participant_id: String,
    condition_id: String,
    #[serde(default)]
    topic: String,
}

async fn create_session(
    State(state): State<AppState>,
    Path(study_id): Path<String>,
    headers: HeaderMap,
    Json(req): Json<NewSession>,
) -> ApiResult<Response> {
    require_study(&state, &study_id)?;
    require_researcher(&state, &headers, &study_id)?;
    blocking(move || {
        let session_id = req
            .session_id
            .clone()
            .unwrap_or_else(|| format!("{}-{}", req.participant_id, req.condition_id));
        let sid = session_id.clone();
        state.store.update(&study_id, move |study| {
            if study.session(&sid).is_some() {
                return Err(Error::AlreadyExists(format!(
                    "{}/{sid}",
                    study.design.study_id
                )));
            }
            if !study
                .participants
                .iter()
                .any(|p| p.participant_id == req.participant_id)
            {
                study.participants.push(Participant {
                    participant_id: req.participant_id.clone(),
                    demographics: BTreeMap::new(),
                });
            }
            let mut s = Session::new(&sid, &req.participant_id, &req.condition_id);
            s.topic = req.topic;
            study.sessions.push(s);
            Ok(())
        })?;
        let token = state.tokens.mint(Grant::Participant {
            study_id,
            session_id: session_id.clone(),
        })?;
        Ok((
            StatusCode::CREATED,
            Json(json!({ "session_id": session_id, "participant_token": token })),
        )
            .into_response())
    })
    .await
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct NewAnnotator {
    annotator_id: String,
}

async fn create_annotator(
    State(state): State<AppState>,
    Path(study_id): Path<String>,
    headers: HeaderMap,
    Json(req): Json<NewAnnotator>,
) -> ApiResult<Response> {
    require_study(&state, &study_id)?;
    require_researcher(&state, &headers, &study_id)?;
    if req.annotator_id.trim().is_empty() {
        return Err(ApiError::invalid("annotator_id must not be empty"));
    }
    blocking(move || {
        let token = state.tokens.mint(Grant::Annotator {
            study_id,
            annotator_id: req.annotator_id.clone(),
        })?;
        Ok((
            StatusCode::CREATED,
            Json(json!({ "annotator_id": req.annotator_id, "annotator_token": token })),
        )
            .into_response())
    })
    .await
}

fn participant(state: &AppState, headers: &HeaderMap) -> ApiResult<(String, String)> {
    match grant(state, headers)? {
        Grant::Participant {
            study_id,
            session_id,
        } => Ok((study_id, session_id)),
        _ => Err(ApiError::forbidden()),
    }
}

#[derive(Debug, Serialize)]
struct StepItem {
    instrument_id: String,
    item_id: String,
    prompt: String,
    negative_anchor: String,
    positive_anchor: String,
    scale_min: i32,
    scale_max: i32,
    answered: bool,
}

#[derive(Debug, Serialize)]
struct SummaryTask {
    phase: Phase,
    submitted: bool,
}

#[derive(Debug, Serialize)]
#[serde(tag = "step", rename_all = "snake_case")]
enum Step {
    PreQuestionnaire {
        session_id: String,
        demographics: Vec<&'static str>,
        items: Vec<StepItem>,
        summary: SummaryTask,
    },
    Task {
        session_id: String,
        condition_id: String,
        topic: String,
    },
    PostQuestionnaire {
        session_id: String,
        items: Vec<StepItem>,
        summary: SummaryTask,
    },
    Done {
        session_id: String,
    },
}

/// `(instrument_id, item_id)` of every Likert item due in `phase`.
fn phase_items(
    study: &Study,
    registry: &InstrumentRegistry,
    phase: Phase,
) -> Vec<(String, String)> {
    let mut out = Vec::new();
    for id in registry.report_order(&study.design.instruments) {
        let Some(inst) = registry.get(&id) else {
            continue;
        };
        for item in inst
            .items_in_phase(phase)
            .filter(|i| i.kind == ResponseKind::Likert)
        {
            out.push((id.clone(), item.item_id.clone()));
        }
    }
    out
}

fn step_items(
    study: &Study,
    registry: &InstrumentRegistry,
    session: &Session,
    phase: Phase,
) -> Vec<StepItem> {
    let config = &study.design.analysis;
    let mut out = Vec::new();
    for id in registry.report_order(&study.design.instruments) {
        let Some(inst) = registry.get(&id) else {
            continue;
        };
        for item in inst
            .items_in_phase(phase)
            .filter(|i| i.kind == ResponseKind::Likert)
        {
            out.push(StepItem {
                instrument_id: id.clone(),
                item_id: item.item_id.clone(),
                prompt: item.prompt.clone(),
                negative_anchor: item.negative_anchor.clone(),
                positive_anchor: item.positive_anchor.clone(),
                scale_min: config.scale_min,
                scale_max: config.scale_max,
                answered: session
                    .responses(phase)
                    .iter()
                    .any(|r| r.instrument_id == id && r.item_id == item.item_id),
            });
        }
    }
    out
}

/// Phase whose questionnaire is open in `state`, if any.
fn open_phase(state: SessionState) -> Option<Phase> {
    match state {
        SessionState::Created => Some(Phase::Pre),
        SessionState::TaskDone => Some(Phase::Post),
        _ => None,
    }
}

/// Advances past a questionnaire step once all its items and its summary are in.
fn maybe_advance(study: &mut Study, session_id: &str) {
    let registry = study.registry();
    let Some(session) = study.session(session_id) else {
        return;
    };
    let Some(phase) = open_phase(session.state) else {
        return;
    };
    let answered = phase_items(study, &registry, phase)
        .iter()
        .all(|(inst, item)| {
            session
                .responses(phase)
                .iter()
                .any(|r| &r.instrument_id == inst && &r.item_id == item)
        });
    let summarized = session.summary(phase).is_some();
    if answered && summarized {
        let next = match phase {
            Phase::Pre => SessionState::PreDone,
            Phase::Post => SessionState::PostDone,
        };
        study
            .session_mut(session_id)
            .expect("session found above")
            .advance_to(next);
    }
}

fn load_session(state: &AppState, study_id: &str, session_id: &str) -> ApiResult<(Study, Session)> {
    let study = state.store.load(study_id)?;
    let session = study
        .session(session_id)
        .cloned()
        .ok_or_else(|| ApiError::not_found(format!("unknown session `{session_id}`")))?;
    Ok((study, session))
}

async fn next_step(State(state): State<AppState>, headers: HeaderMap) -> ApiResult<Response> {
    let (study_id, session_id) = participant(&state, &headers)?;
    blocking(move || {
        let (study, s) = load_session(&state, &study_id, &session_id)?;
        let registry = study.registry();
        let step = match s.state {
            SessionState::Created => Step::PreQuestionnaire {
                session_id,
                demographics: DEMOGRAPHIC_FIELDS.to_vec(),
                items: step_items(&study, &registry, &s, Phase::Pre),
                summary: SummaryTask {
                    phase: Phase::Pre,
                    submitted: s.pre_summary.is_some(),
                },
            },
            SessionState::PreDone => Step::Task {
                session_id,
                condition_id: s.condition_id.clone(),
                topic: s.topic.clone(),
            },
            SessionState::TaskDone => Step::PostQuestionnaire {
                session_id,
                items: step_items(&study, &registry, &s, Phase::Post),
                summary: SummaryTask {
                    phase: Phase::Post,
                    submitted: s.post_summary.is_some(),
                },
            },
            SessionState::PostDone => Step::Done { session_id },
            SessionState::Closed => {
                return Err(ApiError::new(
                    StatusCode::GONE,
                    "closed",
                    "session is closed",
                ));
            }
        };
        Ok(Json(step).into_response())
    })
    .await
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ResponseIn {
    instrument_id: String,
    item_id: String,
    value: i32,
    #[serde(default)]
    timestamp: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ResponseBatch {
    #[serde(default)]
    responses: Vec<ResponseIn>,
    #[serde(default)]
    demographics: BTreeMap<String, String>,
}

fn now_rfc3339() -> String {
    chrono::DateTime::<chrono::Utc>::from(std::time::SystemTime::now())
        .to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
}

async fn submit_responses(
    State(state): State<AppState>,
    headers: HeaderMap,
    Json(batch): Json<ResponseBatch>,
) -> ApiResult<Response> {
    let (study_id, session_id) = participant(&state, &headers)?;
    blocking(move || {
        let outcome = state.store.update(&study_id, |study| {
            let registry = study.registry();
            let config = study.design.analysis.clone();
            let s = study
                .session(&session_id)
                .ok_or_else(|| Error::contract(format!("unknown session `{session_id}`")))?;
            let Some(phase) = open_phase(s.state) else {
                return Ok(Err(ApiError::conflict(format!(
                    "no questionnaire is open in state {:?}",
                    s.state
                ))));
            };
            if !batch.demographics.is_empty() && phase != Phase::Pre {
                return Ok(Err(ApiError::conflict(
                    "demographics belong to the pre-search step",
                )));
            }
            let mut seen: Vec<(&str, &str)> = s
                .responses(phase)
                .iter()
                .map(|r| (r.instrument_id.as_str(), r.item_id.as_str()))
                .collect();
            let mut accepted = Vec::new();
            for r in &batch.responses {
                if !study.design.instruments.contains(&r.instrument_id) {
                    return Ok(Err(ApiError::invalid(format!(
                        "instrument `{}` is not part of this study",
                        r.instrument_id
                    ))));
                }
                let Some(item) = registry.item(&r.instrument_id, &r.item_id) else {
                    return Ok(Err(ApiError::invalid(format!(
                        "unknown item `{}/{}`",
                        r.instrument_id, r.item_id
                    ))));
                };
                if item.phase != phase {
                    return Ok(Err(ApiError::invalid(format!(
                        "item `{}/{}` belongs to the {} phase, current step is {phase}",
                        r.instrument_id, r.item_id, item.phase
                    ))));
                }
                if item.kind != ResponseKind::Likert {
                    return Ok(Err(ApiError::invalid(format!(
                        "item `{}` is not a Likert item",
                        r.item_id
                    ))));
                }
                if !config.value_in_scale(r.value) {
                    return Ok(Err(ApiError::invalid(format!(
                        "value {} outside {}..={}",
                        r.value, config.scale_min, config.scale_max
                    ))));
                }
                if seen.contains(&(r.instrument_id.as_str(), r.item_id.as_str())) {
                    return Ok(Err(ApiError::conflict(format!(
                        "item `{}/{}` already answered",
                        r.instrument_id, r.item_id
                    ))));
                }
                seen.push((&r.instrument_id, &r.item_id));
                accepted.push(ItemResponse {
                    instrument_id: r.instrument_id.clone(),
                    item_id: r.item_id.clone(),
                    value: r.value,
                    timestamp: r.timestamp.clone().unwrap_or_else(now_rfc3339),
                });
            }
            let pid = s.participant_id.clone();
            let n = accepted.len();
            study
                .session_mut(&session_id)
                .expect("found above")
                .responses_mut(phase)
                .extend(accepted);
            if !batch.demographics.is_empty() {
                let p = match study
                    .participants
                    .iter_mut()
                    .position(|p| p.participant_id == pid)
                {
                    Some(i) => &mut study.participants[i],
                    None => {
                        study.participants.push(Participant {
                            participant_id: pid.clone(),
                            demographics: BTreeMap::new(),
                        });
                        study.participants.last_mut().expect("just pushed")
                    }
                };
                p.demographics.extend(batch.demographics.clone());
            }
            maybe_advance(study, &session_id);
            let state = study.session(&session_id).expect("found above").state;
            Ok(Ok((n, state)))
        });
        let (n, s) = outcome??;
        Ok(Json(json!({ "accepted": n, "state": s })).into_response())
    })
    .await
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SummaryIn {
    phase: Phase,
    text: String,
}

async fn submit_summary(
    State(state): State<AppState>,
    headers: HeaderMap,
    Json(req): Json<SummaryIn>,
) -> ApiResult<Response> {
    let (study_id, session_id) = participant(&state, &headers)?;
    blocking(move || {
        let outcome = state.store.update(&study_id, |study| {
            let s = study
                .session(&session_id)
                .ok_or_else(|| Error::contract(format!("unknown session `{session_id}`")))?;
            if open_phase(s.state) != Some(req.phase) {
                return Ok(Err(ApiError::conflict(format!(
                    "{} summary is not expected in state {:?}",
                    req.phase, s.state
                ))));
            }
            if s.summary(req.phase).is_some() {
                return Ok(Err(ApiError::conflict(format!(
                    "{} summary already submitted",
                    req.phase
                ))));
            }
            let summary_id = format!("{session_id}-{}", req.phase);
            *study
                .session_mut(&session_id)
                .expect("found above")
                .summary_mut(req.phase) = Some(SummaryDocument {
                summary_id: summary_id.clone(),
                phase: req.phase,
                text: req.text.clone(),
                ratings: Vec::new(),
            });
            maybe_advance(study, &session_id);
            let state = study.session(&session_id).expect("found above").state;
            Ok(Ok((summary_id, state)))
        });
        let (summary_id, s) = outcome??;
        Ok((
            StatusCode::CREATED,
            Json(json!({
                "summary_id": summary_id,
                "zero_length": req.text.trim().is_empty(),
                "state": s,
            })),
        )
            .into_response())
    })
    .await
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TaskIn {
    docs_viewed: u32,
}

async fn complete_task(
    State(state): State<AppState>,
    headers: HeaderMap,
    Json(req): Json<TaskIn>,
) -> ApiResult<Response> {
    let (study_id, session_id) = participant(&state, &headers)?;
    transition(
        state,
        study_id,
        session_id,
        SessionState::PreDone,
        SessionState::TaskDone,
        Some(req.docs_viewed),
    )
    .await
}

async fn close_session(State(state): State<AppState>, headers: HeaderMap) -> ApiResult<Response> {
    let (study_id, session_id) = participant(&state, &headers)?;
    transition(
        state,
        study_id,
        session_id,
        SessionState::PostDone,
        SessionState::Closed,
        None,
    )
    .await
}

async fn transition(
    state: AppState,
    study_id: String,
    session_id: String,
    from: SessionState,
    to: SessionState,
    docs_viewed: Option<u32>,
) -> ApiResult<Response> {
    blocking(move || {
        let outcome = state.store.update(&study_id, |study| {
            let s = study
                .session_mut(&session_id)
                .ok_or_else(|| Error::contract(format!("unknown session `{session_id}`")))?;
            if s.state != from {
                return Ok(Err(ApiError::conflict(format!(
                    "cannot move from {:?} to {to:?}",
                    s.state
                ))));
            }
            if let Some(d) = docs_viewed {
                s.docs_viewed = d;
            }
            s.advance_to(to);
            Ok(Ok(()))
        });
        outcome??;
        Ok(Json(json!({ "state": to })).into_response())
    })
    .await
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RatingIn {
    summary_id: String,
    dqual: u8,
    dintrp: u8,
    dcrit: u8,
}

async fn submit_rating(
    State(state): State<AppState>,
    headers: HeaderMap,
    Json(req): Json<RatingIn>,
) -> ApiResult<Response> {
    let (study_id, annotator_id) = match grant(&state, &headers)? {
        Grant::Annotator {
            study_id,
            annotator_id,
        } => (study_id, annotator_id),
        _ => return Err(ApiError::forbidden()),
    };
    let rating = SummaryRating {
        annotator_id,
        dqual: req.dqual,
        dintrp: req.dintrp,
        dcrit: req.dcrit,
    };
    if let Some(d) = rating.out_of_range().first() {
        return Err(ApiError::invalid(format!(
            "{} = {} outside 0..={}",
            d.name(),
            rating.score(*d),
            d.max()
        )));
    }
    blocking(move || {
        let outcome = state.store.update(&study_id, |study| {
            let doc = study
                .sessions
                .iter_mut()
                .flat_map(|s| [s.pre_summary.as_mut(), s.post_summary.as_mut()])
                .flatten()
                .find(|d| d.summary_id == req.summary_id);
            let Some(doc) = doc else {
                return Ok(Err(ApiError::not_found(format!(
                    "unknown summary `{}`",
                    req.summary_id
                ))));
            };
            if doc
                .ratings
                .iter()
                .any(|r| r.annotator_id == rating.annotator_id)
            {
                return Ok(Err(ApiError::conflict(
                    "summary already rated by this annotator",
                )));
            }
            doc.ratings.push(rating.clone());
            Ok(Ok(()))
        });
        outcome??;
        Ok((
            StatusCode::CREATED,
            Json(json!({ "summary_id": req.summary_id })),
        )
            .into_response())
    })
    .await
}

fn require_reader(state: &AppState, headers: &HeaderMap, study_id: &str) -> ApiResult<Grant> {
    let g = grant(state, headers)?;
    match &g {
        Grant::Researcher { .. } | Grant::Annotator { .. } if g.study_id() == study_id => Ok(g),
        _ => Err(ApiError::forbidden()),
    }
}

async fn list_summaries(
    State(state): State<AppState>,
    Path(study_id): Path<String>,
    headers: HeaderMap,
) -> ApiResult<Response> {
    require_study(&state, &study_id)?;
    let g = require_reader(&state, &headers, &study_id)?;
    blocking(move || {
        let study = state.store.load(&study_id)?;
        let me = match &g {
            Grant::Annotator { annotator_id, .. } => Some(annotator_id.clone()),
            _ => None,
        };
        let mut out = Vec::new();
        for s in &study.sessions {
            for doc in [&s.pre_summary, &s.post_summary].into_iter().flatten() {
                out.push(json!({
                    "summary_id": doc.summary_id,
                    "session_id": s.session_id,
                    "phase": doc.phase,
                    "text": doc.text,
                    "zero_length": doc.text.trim().is_empty(),
                    "ratings": doc.ratings.len(),
                    "rated_by_me": me.as_ref().is_some_and(|a| doc.ratings.iter().any(|r| &r.annotator_id == a)),
                }));
            }
        }
        Ok(Json(json!({ "summaries": out })).into_response())
    })
    .await
}

async fn agreement(
    State(state): State<AppState>,
    Path(study_id): Path<String>,
    headers: HeaderMap,
) -> ApiResult<Response> {
    require_study(&state, &study_id)?;
    require_reader(&state, &headers, &study_id)?;
    blocking(move || {
        let study = state.store.load(&study_id)?;
        let config = &study.design.analysis;
        let body = match study_agreement(&study.sessions)? {
            None => json!({ "status": "insufficient", "rated_pairs": 0 }),
            Some(a) => {
                let passed = a.check_gate(config).is_ok();
                json!({
                    "status": "ok",
                    "rated_pairs": a.rated_pairs,
                    "kappa": a.kappa,
                    "threshold": config.kappa_threshold,
                    "gate_passed": passed,
                })
            }
        };
        Ok(Json(body).into_response())
    })
    .await
}

async fn analysis(
    State(state): State<AppState>,
    Path(study_id): Path<String>,
    headers: HeaderMap,
) -> ApiResult<Response> {
    require_study(&state, &study_id)?;
    require_researcher(&state, &headers, &study_id)?;
    blocking(move || {
        let study = state.store.load(&study_id)?;
        let report = analyze(&study)?;
        let body = render(&report, ReportFormat::Structured);
        Ok(([(header::CONTENT_TYPE, "application/json")], body).into_response())
    })
    .await
}
