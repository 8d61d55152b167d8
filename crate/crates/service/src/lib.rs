//! HTTP API over session folders.
//!
//! Sessions map one-to-one to dated folders under the configured root and
//! the folders are the only state: a session created through the CLI can be
//! inspected and summarized here and vice versa. Writes to one session are
//! serialized behind a per-session lock.

mod error;

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use axum::extract::{Path as UrlPath, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use base64::Engine;
use serde::{Deserialize, Serialize};

use robodiary_core::config::{Config, ConfigError};
use robodiary_core::emotion::IntentRuleSet;
use robodiary_core::memory::{
    parse_date, read_folder, EmotionSet, EventRecord, Session, StoredFolder, EVENTS_FILE,
};
use robodiary_core::providers::Providers;
use robodiary_core::recorder::{ActionOutcome, ChatOutcome, Recorder};
use robodiary_core::summarize::{
    generate_control_diary, generate_diary, save_diary, Diary, DiaryConfig, DiaryMode,
    PremiseInputs,
};

pub use error::ApiError;

type Shared<T> = Arc<Mutex<T>>;

/// Everything the handlers share.
#[derive(Clone)]
pub struct AppState {
    inner: Arc<Inner>,
}

struct Inner {
    root: PathBuf,
    config: Config,
    rules: Arc<IntentRuleSet>,
    providers: Providers,
    diary: DiaryConfig,
    sessions: Mutex<HashMap<String, Shared<Recorder>>>,
}

impl AppState {
    pub fn new(config: Config) -> Result<Self, ConfigError> {
        Ok(AppState {
            inner: Arc::new(Inner {
                root: config.root.clone(),
                rules: Arc::new(config.rules()?),
                providers: config.providers()?,
                diary: config.diary_config()?,
                config,
                sessions: Mutex::new(HashMap::new()),
            }),
        })
    }

    pub fn root(&self) -> &Path {
        &self.inner.root
    }

    fn emotions(&self) -> EmotionSet {
        self.inner.rules.emotions().clone()
    }

    fn open_session(&self, id: &str) -> Option<Shared<Recorder>> {
        self.inner
            .sessions
            .lock()
            .expect("session registry poisoned")
            .get(id)
            .cloned()
    }

    /// The folder behind `id`, which must be a date with a folder on disk.
    fn session_dir(&self, id: &str) -> Result<PathBuf, ApiError> {
        let date =
            parse_date(id).map_err(|_| ApiError::not_found(format!("unknown session {id:?}")))?;
        let dir = self.inner.root.join(date.format("%Y-%m-%d").to_string());
        if dir.join(EVENTS_FILE).is_file() {
            Ok(dir)
        } else {
            Err(ApiError::not_found(format!("unknown session {id:?}")))
        }
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/chat", post(post_chat))
        .route("/sessions/{id}/toy-play", post(post_toy_play))
        .route("/sessions/{id}/feed", post(post_feed))
        .route("/sessions/{id}/close", post(close_session))
        .route("/sessions/{id}/diary", post(post_diary))
        .route("/sessions/{id}/images/{file}", get(get_image))
        .with_state(state)
}

/// Binds `addr` and serves until the process is stopped.
pub async fn serve(state: AppState, addr: &str) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(addr = %listener.local_addr()?, root = %state.root().display(), "serving");
    axum::serve(listener, router(state)).await
}

async fn blocking<T, F>(f: F) -> Result<T, ApiError>
where
    F: FnOnce() -> Result<T, ApiError> + Send + 'static,
    T: Send + 'static,
{
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::internal(format!("worker failed: {e}")))?
}

fn decode_image(image: Option<String>) -> Result<Option<Vec<u8>>, ApiError> {
    image
        .map(|b64| {
            base64::engine::general_purpose::STANDARD
                .decode(b64.trim())
                .map_err(|e| ApiError::bad_request(format!("image_base64: {e}")))
        })
        .transpose()
}

pub fn image_url(id: &str, file: &str) -> String {
    format!("/sessions/{id}/images/{}", file.replace(' ', "%20"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SessionState {
    Open,
    Closed,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SessionView {
    pub session_id: String,
    pub date: String,
    pub state: SessionState,
    pub records: Vec<EventRecord>,
    pub images: Vec<String>,
}

#[derive(Debug, Deserialize)]
pub struct CreateSession {
    pub date: String,
}

async fn create_session(
    State(state): State<AppState>,
    Json(req): Json<CreateSession>,
) -> Result<(StatusCode, Json<SessionView>), ApiError> {
    let date = parse_date(req.date.trim())?;
    let id = date.format("%Y-%m-%d").to_string();
    let already_open = |state: &AppState| {
        state
            .open_session(&id)
            .is_some_and(|s| s.lock().map(|r| r.session().is_open()).unwrap_or(false))
    };
    let conflict = || {
        ApiError::new(
            StatusCode::CONFLICT,
            "conflict",
            format!("session {id} is already open"),
        )
    };
    if already_open(&state) {
        return Err(conflict());
    }
    let st = state.clone();
    let recorder = blocking(move || {
        let policy = st.inner.config.recording_policy();
        let session = Session::create(&st.inner.root, date, st.emotions())?.with_policy(policy)?;
        Ok(Recorder::new(session, st.inner.rules.clone()))
    })
    .await?;
    let view = view_of(&id, &recorder, SessionState::Open);
    {
        let mut sessions = state
            .inner
            .sessions
            .lock()
            .expect("session registry poisoned");
        let open = sessions
            .get(&id)
            .is_some_and(|s| s.lock().map(|r| r.session().is_open()).unwrap_or(false));
        if open {
            return Err(conflict());
        }
        sessions.insert(id.clone(), Arc::new(Mutex::new(recorder)));
    }
    tracing::info!(session = %id, "session created");
    Ok((StatusCode::CREATED, Json(view)))
}

fn view_of(id: &str, recorder: &Recorder, state: SessionState) -> SessionView {
    let folder = recorder.session().folder();
    SessionView {
        session_id: id.to_string(),
        date: folder.folder_name(),
        state,
        records: folder.records.clone(),
        images: folder.images.iter().cloned().collect(),
    }
}

async fn get_session(
    State(state): State<AppState>,
    UrlPath(id): UrlPath<String>,
) -> Result<Json<SessionView>, ApiError> {
    if let Some(recorder) = state.open_session(&id) {
        let recorder = recorder.lock().expect("session lock poisoned");
        let s = if recorder.session().is_open() {
            SessionState::Open
        } else {
            SessionState::Closed
        };
        return Ok(Json(view_of(&id, &recorder, s)));
    }
    let dir = state.session_dir(&id)?;
    let folder = blocking(move || Ok(read_folder(&dir)?)).await?;
    Ok(Json(SessionView {
        session_id: id,
        date: folder.folder_name(),
        state: SessionState::Closed,
        records: folder.records,
        images: folder.images.into_iter().collect(),
    }))
}

/// Runs `f` on the open recorder for `id`, holding its lock.
async fn with_recorder<T, F>(state: &AppState, id: &str, f: F) -> Result<T, ApiError>
where
    F: FnOnce(&mut Recorder) -> Result<T, ApiError> + Send + 'static,
    T: Send + 'static,
{
    let recorder = match state.open_session(id) {
        Some(r) => r,
        None => {
            state.session_dir(id)?;
            return Err(ApiError::new(
                StatusCode::CONFLICT,
                "session_closed",
                format!("session {id} is not open for recording"),
            ));
        }
    };
    blocking(move || f(&mut recorder.lock().expect("session lock poisoned"))).await
}

#[derive(Debug, Deserialize)]
pub struct ChatRequest {
    pub message: String,
    #[serde(default)]
    pub image_base64: Option<String>,
}

async fn post_chat(
    State(state): State<AppState>,
    UrlPath(id): UrlPath<String>,
    Json(req): Json<ChatRequest>,
) -> Result<Json<ChatOutcome>, ApiError> {
    let image = decode_image(req.image_base64)?;
    let out = with_recorder(&state, &id, move |r| Ok(r.chat(&req.message, image)?)).await?;
    Ok(Json(out))
}

#[derive(Debug, Deserialize)]
pub struct ToyPlayRequest {
    pub toy_name: String,
    pub probability: f64,
    #[serde(default)]
    pub speech: Option<String>,
    #[serde(default)]
    pub image_base64: Option<String>,
}

async fn post_toy_play(
    State(state): State<AppState>,
    UrlPath(id): UrlPath<String>,
    Json(req): Json<ToyPlayRequest>,
) -> Result<Json<ActionOutcome>, ApiError> {
    let image = decode_image(req.image_base64)?;
    let out = with_recorder(&state, &id, move |r| {
        Ok(r.toy_play(&req.toy_name, req.probability, image, req.speech.as_deref())?)
    })
    .await?;
    Ok(Json(out))
}

#[derive(Debug, Deserialize)]
pub struct FeedRequest {
    pub food_tag: String,
    #[serde(default)]
    pub speech: Option<String>,
    #[serde(default)]
    pub image_base64: Option<String>,
}

async fn post_feed(
    State(state): State<AppState>,
    UrlPath(id): UrlPath<String>,
    Json(req): Json<FeedRequest>,
) -> Result<Json<ActionOutcome>, ApiError> {
    let image = decode_image(req.image_base64)?;
    let out = with_recorder(&state, &id, move |r| {
        Ok(r.feed(&req.food_tag, image, req.speech.as_deref())?)
    })
    .await?;
    Ok(Json(out))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Closed {
    pub session_id: String,
    pub state: SessionState,
    pub already_closed: bool,
}

async fn close_session(
    State(state): State<AppState>,
    UrlPath(id): UrlPath<String>,
) -> Result<Json<Closed>, ApiError> {
    let already_closed = match state.open_session(&id) {
        Some(recorder) => !recorder.lock().expect("session lock poisoned").close(),
        None => {
            state.session_dir(&id)?;
            true
        }
    };
    Ok(Json(Closed {
        session_id: id,
        state: SessionState::Closed,
        already_closed,
    }))
}

#[derive(Debug, Deserialize)]
pub struct DiaryRequest {
    pub mode: String,
    pub place: String,
    pub event: String,
    #[serde(default)]
    pub person: String,
    #[serde(default)]
    pub k: Option<usize>,
    #[serde(default)]
    pub seed: Option<u64>,
    /// Write the diary file beside the session folder.
    #[serde(default = "yes")]
    pub save: bool,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Serialize, Deserialize)]
pub struct DiaryResponse {
    pub diary: Diary,
    pub image_urls: Vec<String>,
    pub saved_to: Option<PathBuf>,
}

async fn post_diary(
    State(state): State<AppState>,
    UrlPath(id): UrlPath<String>,
    Json(req): Json<DiaryRequest>,
) -> Result<Json<DiaryResponse>, ApiError> {
    let mode: DiaryMode = req.mode.parse().map_err(ApiError::bad_request)?;
    let dir = state.session_dir(&id)?;
    // hold the session lock while reading so no write lands half-seen
    let recorder = state.open_session(&id);
    let st = state.clone();
    let diary = blocking(move || {
        let stored = {
            let _guard = recorder
                .as_ref()
                .map(|r| r.lock().expect("session lock poisoned"));
            StoredFolder::load(&dir, &st.emotions())?
        };
        let mut config = st.inner.diary.clone();
        if req.k.is_some() {
            config.k = req.k;
        }
        if let Some(seed) = req.seed {
            config.seed = seed;
        }
        let inputs = PremiseInputs::new(&req.place, &req.person, &req.event);
        let diary = match mode {
            DiaryMode::WithInteraction => {
                generate_diary(&stored, &inputs, &st.inner.providers, &config)?
            }
            DiaryMode::WithoutInteraction => {
                generate_control_diary(&stored, &inputs, &st.inner.providers, &config, config.seed)?
            }
        };
        let saved_to = if req.save {
            Some(save_diary(&diary, &stored.dir)?)
        } else {
            None
        };
        Ok((diary, saved_to))
    })
    .await?;
    let (diary, saved_to) = diary;
    tracing::info!(session = %id, mode = diary.mode.as_str(), "diary generated");
    Ok(Json(DiaryResponse {
        image_urls: diary
            .source_images
            .iter()
            .map(|f| image_url(&id, f))
            .collect(),
        diary,
        saved_to,
    }))
}

async fn get_image(
    State(state): State<AppState>,
    UrlPath((id, file)): UrlPath<(String, String)>,
) -> Result<Response, ApiError> {
    let dir = state.session_dir(&id)?;
    let known = !file.contains(['/', '\\']) && file.ends_with(".png") && !file.starts_with('.');
    if !known {
        return Err(ApiError::not_found(format!("no image {file:?}")));
    }
    let path = dir.join(&file);
    let bytes = blocking(move || {
        std::fs::read(&path).map_err(|_| ApiError::not_found(format!("no image {file:?}")))
    })
    .await?;
    Ok(([(header::CONTENT_TYPE, "image/png")], bytes).into_response())
}
