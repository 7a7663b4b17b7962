//! REST endpoints over a workspace and a conversation store.

use std::collections::{HashMap, HashSet};
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use kgqa_core::agent::{
    Agent, AgentTrace, CitationReport, Source, StepTimings, SystemClock, TurnRequest,
    TurnStatus,
};
use kgqa_core::llm::LlmProvider;
use kgqa_core::workspace::{provider_for, Workspace};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::store::{Store, StoreError};

pub struct AppState {
    pub workspace: Arc<Workspace>,
    pub store: Arc<Store>,
    providers: Mutex<HashMap<String, Arc<dyn LlmProvider>>>,
    busy: Mutex<HashSet<String>>,
}

impl AppState {
    pub fn new(workspace: Workspace, store: Store) -> Arc<Self> {
        Arc::new(AppState {
            workspace: Arc::new(workspace),
            store: Arc::new(store),
            providers: Mutex::new(HashMap::new()),
            busy: Mutex::new(HashSet::new()),
        })
    }

    fn provider(&self, profile_id: &str) -> Result<Arc<dyn LlmProvider>, String> {
        let mut cache = self.providers.lock().unwrap_or_else(|e| e.into_inner());
        if let Some(p) = cache.get(profile_id) {
            return Ok(p.clone());
        }
        let profile = self
            .workspace
            .profiles
            .get(profile_id)
            .ok_or_else(|| format!("unknown profile {profile_id}"))?;
        let provider = provider_for(profile, &self.workspace.root).map_err(|e| e.to_string())?;
        cache.insert(profile_id.to_string(), provider.clone());
        Ok(provider)
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/profiles", get(profiles))
        .route("/conversations", post(create_conversation).get(list_conversations))
        .route("/conversations/:id", get(get_conversation))
        .route("/conversations/:id/messages", post(post_message))
        .route("/conversations/:id/profile", post(set_profile))
        .route("/traces/:id", get(get_trace))
        .with_state(state)
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    body: serde_json::Value,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        ApiError {
            status,
            body: json!({ "error": message.into() }),
        }
    }

    fn not_found(what: &str, id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, format!("unknown {what} {id}"))
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        tracing::error!(error = %e, "store failure");
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

fn parse_body<T: for<'de> Deserialize<'de> + Default>(body: &Bytes) -> ApiResult<T> {
    if body.iter().all(u8::is_ascii_whitespace) {
        return Ok(T::default());
    }
    serde_json::from_slice(body)
        .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, format!("invalid JSON body: {e}")))
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> T + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))
}

async fn health(State(state): State<Arc<AppState>>) -> Json<serde_json::Value> {
    Json(json!({
        "status": "ok",
        "passages": state.workspace.index.len(),
        "profiles": state.workspace.profiles.profiles.len(),
    }))
}

async fn profiles(State(state): State<Arc<AppState>>) -> Json<serde_json::Value> {
    Json(serde_json::to_value(&state.workspace.profiles).expect("profiles serialize"))
}

#[derive(Debug, Default, Deserialize)]
#[serde(rename_all = "camelCase", default)]
struct CreateConversation {
    title: Option<String>,
    profile_id: Option<String>,
}

async fn create_conversation(
    State(state): State<Arc<AppState>>,
    body: Bytes,
) -> ApiResult<(StatusCode, Json<serde_json::Value>)> {
    let req: CreateConversation = parse_body(&body)?;
    let profile_id = req
        .profile_id
        .unwrap_or_else(|| state.workspace.profiles.default_profile.clone());
    if state.workspace.profiles.get(&profile_id).is_none() {
        return Err(ApiError::new(StatusCode::BAD_REQUEST, format!("unknown profile {profile_id}")));
    }
    let title = req.title.unwrap_or_default();
    let conversation = blocking(move || state.store.create_conversation(&title, &profile_id)).await??;
    Ok((
        StatusCode::CREATED,
        Json(serde_json::to_value(conversation).expect("serializes")),
    ))
}

#[derive(Debug, Deserialize)]
struct PageQuery {
    page: Option<usize>,
}

async fn list_conversations(
    State(state): State<Arc<AppState>>,
    Query(q): Query<PageQuery>,
) -> ApiResult<Json<serde_json::Value>> {
    let page = blocking(move || state.store.list(q.page.unwrap_or(1))).await??;
    Ok(Json(serde_json::to_value(page).expect("serializes")))
}

async fn get_conversation(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> ApiResult<Json<serde_json::Value>> {
    let lookup = id.clone();
    match blocking(move || state.store.get(&lookup)).await?? {
        Some(c) => Ok(Json(serde_json::to_value(c).expect("serializes"))),
        None => Err(ApiError::not_found("conversation", &id)),
    }
}

async fn get_trace(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> ApiResult<Json<serde_json::Value>> {
    let lookup = id.clone();
    match blocking(move || state.store.trace(&lookup)).await?? {
        Some(t) => Ok(Json(serde_json::to_value(t).expect("serializes"))),
        None => Err(ApiError::not_found("trace", &id)),
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(rename_all = "camelCase", default)]
struct SetProfile {
    profile_id: String,
}

async fn set_profile(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<Json<serde_json::Value>> {
    let req: SetProfile = parse_body(&body)?;
    if state.workspace.profiles.get(&req.profile_id).is_none() {
        return Err(ApiError::new(
            StatusCode::BAD_REQUEST,
            format!("unknown profile {:?}", req.profile_id),
        ));
    }
    let lookup = id.clone();
    let store = state.store.clone();
    let found = blocking(move || {
        store
            .set_profile(&lookup, &req.profile_id)
            .and_then(|ok| if ok { store.get(&lookup) } else { Ok(None) })
    })
    .await??;
    match found {
        Some(c) => Ok(Json(serde_json::to_value(c).expect("serializes"))),
        None => Err(ApiError::not_found("conversation", &id)),
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(default)]
struct PostMessage {
    question: String,
}

#[derive(Debug, Serialize)]
#[serde(rename_all = "camelCase")]
struct TurnResponse {
    conversation_id: String,
    turn_index: u32,
    status: TurnStatus,
    answer: String,
    trace_id: String,
    citations: CitationReport,
    sources: Vec<Source>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

/// Removes the conversation from the busy set when the turn ends.
struct BusyGuard {
    state: Arc<AppState>,
    id: String,
}

impl Drop for BusyGuard {
    fn drop(&mut self) {
        self.state
            .busy
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .remove(&self.id);
    }
}

enum TurnOutcome {
    Done(AgentTrace),
    Failed { trace: AgentTrace, unavailable: bool },
    Missing,
}

fn failed_trace(conversation_id: &str, index: u32, profile_id: &str, question: &str, error: String) -> AgentTrace {
    AgentTrace {
        turn_id: uuid::Uuid::new_v4().to_string(),
        conversation_id: conversation_id.to_string(),
        turn_index: index,
        profile_id: profile_id.to_string(),
        original_question: question.to_string(),
        explicit_sql_query: String::new(),
        explicit_nl_question: String::new(),
        tool_calls: Vec::new(),
        sources: Vec::new(),
        final_answer: String::new(),
        citations: CitationReport::default(),
        step_timings: StepTimings::default(),
        llm_calls: Vec::new(),
        status: TurnStatus::Failed,
        error: Some(error),
    }
}

fn run_turn(state: &AppState, conversation_id: &str, question: &str) -> Result<TurnOutcome, StoreError> {
    let Some(conversation) = state.store.get(conversation_id)? else {
        return Ok(TurnOutcome::Missing);
    };
    let index = conversation.turns.len() as u32 + 1;
    let profile_id = conversation.config_profile_id.clone();
    let resolved = state
        .workspace
        .profiles
        .get(&profile_id)
        .ok_or_else(|| format!("unknown profile {profile_id}"))
        .and_then(|profile| state.provider(&profile_id).map(|p| (profile, p)));
    let outcome = match resolved {
        Ok((profile, provider)) => {
            let config = profile.turn_config();
            let clock = SystemClock::new();
            let ws = &state.workspace;
            let agent = Agent {
                provider: provider.as_ref(),
                db_path: &ws.db_path,
                ddl: &ws.ddl,
                index: &ws.index,
                templates: &ws.templates,
                config: &config,
                clock: &clock,
            };
            let history = conversation.history();
            let request = TurnRequest {
                conversation_id,
                turn_id: uuid::Uuid::new_v4().to_string(),
                turn_index: index,
                profile_id: &profile_id,
                question,
                history: &history,
            };
            match agent.run_turn(&request) {
                Ok(trace) => TurnOutcome::Done(trace),
                Err(failure) => TurnOutcome::Failed {
                    unavailable: failure.error.is_provider_unavailable(),
                    trace: *failure.trace,
                },
            }
        }
        Err(message) => TurnOutcome::Failed {
            trace: failed_trace(
                conversation_id,
                index,
                &profile_id,
                question,
                format!("provider unavailable: {message}"),
            ),
            unavailable: true,
        },
    };
    match &outcome {
        TurnOutcome::Done(trace) | TurnOutcome::Failed { trace, .. } => {
            state.store.append_turn(trace)?;
        }
        TurnOutcome::Missing => {}
    }
    Ok(outcome)
}

async fn post_message(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<(StatusCode, Json<TurnResponse>)> {
    let req: PostMessage = parse_body(&body)?;
    let question = req.question.trim().to_string();
    if question.is_empty() {
        return Err(ApiError::new(StatusCode::BAD_REQUEST, "question must not be empty"));
    }
    if !state.busy.lock().unwrap_or_else(|e| e.into_inner()).insert(id.clone()) {
        return Err(ApiError::new(
            StatusCode::CONFLICT,
            format!("a turn is already running in conversation {id}"),
        ));
    }
    let guard = BusyGuard {
        state: state.clone(),
        id: id.clone(),
    };
    let worker = state.clone();
    let conversation_id = id.clone();
    let outcome = blocking(move || {
        let _guard = guard;
        run_turn(&worker, &conversation_id, &question)
    })
    .await??;
    let (status, trace) = match outcome {
        TurnOutcome::Missing => return Err(ApiError::not_found("conversation", &id)),
        TurnOutcome::Done(trace) => (StatusCode::OK, trace),
        TurnOutcome::Failed { trace, unavailable } => {
            let status = if unavailable {
                StatusCode::SERVICE_UNAVAILABLE
            } else {
                StatusCode::BAD_GATEWAY
            };
            (status, trace)
        }
    };
    Ok((
        status,
        Json(TurnResponse {
            conversation_id: trace.conversation_id,
            turn_index: trace.turn_index,
            status: trace.status,
            answer: trace.final_answer,
            trace_id: trace.turn_id,
            citations: trace.citations,
            sources: trace.sources,
            error: trace.error,
        }),
    ))
}
