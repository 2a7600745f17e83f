use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use axum::extract::{Path, State};
use axum::http::{header, HeaderValue, Method, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use tower_http::cors::{AllowOrigin, CorsLayer};
use tower_http::services::ServeDir;

use super::session::{BenchSession, ImagePool, SessionParams};
use super::store::SessionStore;
use super::BenchError;

#[derive(Debug, Clone)]
pub struct ServeConfig {
    pub addr: SocketAddr,
    pub in_pool: PathBuf,
    pub out_pool: PathBuf,
    /// Directory for session logs; sessions are memory-only without it.
    pub data_dir: Option<PathBuf>,
    pub ui_dir: Option<PathBuf>,
}

#[derive(Clone)]
struct AppState {
    store: Arc<SessionStore>,
    in_pool: Arc<ImagePool>,
    out_pool: Arc<ImagePool>,
}

struct ApiError(BenchError);

impl From<BenchError> for ApiError {
    fn from(e: BenchError) -> Self {
        Self(e)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = match &self.0 {
            BenchError::UnknownSession(_) | BenchError::PageOutOfRange { .. } => StatusCode::NOT_FOUND,
            BenchError::DuplicateSession(_) | BenchError::Incomplete { .. } | BenchError::NotScored => {
                StatusCode::CONFLICT
            }
            BenchError::Storage { .. } => StatusCode::INTERNAL_SERVER_ERROR,
            _ => StatusCode::BAD_REQUEST,
        };
        (status, Json(serde_json::json!({ "error": self.0.to_string() }))).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

#[derive(Debug, Deserialize)]
struct CreateRequest {
    #[serde(default)]
    session_id: Option<String>,
    #[serde(default)]
    in_class_names: Option<Vec<String>>,
    #[serde(flatten)]
    params: SessionParams,
}

#[derive(Debug, Serialize)]
struct PageImageRef {
    id: String,
    url: String,
}

#[derive(Debug, Serialize)]
struct PageResponse {
    session_id: String,
    page: usize,
    page_count: usize,
    images: Vec<PageImageRef>,
}

#[derive(Debug, Deserialize)]
struct SelectionsRequest {
    #[serde(default)]
    selections: BTreeMap<String, String>,
}

async fn create_session(
    State(state): State<AppState>,
    Json(req): Json<CreateRequest>,
) -> ApiResult<(StatusCode, Json<super::SessionInfo>)> {
    let id = req.session_id.unwrap_or_else(|| uuid::Uuid::new_v4().simple().to_string());
    if state.store.contains(&id) {
        return Err(BenchError::DuplicateSession(id).into());
    }
    let in_class_names = match req.in_class_names {
        Some(names) => {
            let known = state.in_pool.class_names();
            if let Some(bad) = names.iter().find(|n| !known.contains(n)) {
                return Err(BenchError::InvalidClass(bad.clone()).into());
            }
            let mut names = names;
            names.dedup();
            names
        }
        None => state.in_pool.class_names(),
    };
    let created_at = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
    let session =
        BenchSession::create(id, &state.in_pool, &state.out_pool, in_class_names, req.params, created_at)?;
    let info = session.info();
    state.store.insert(session)?;
    Ok((StatusCode::CREATED, Json(info)))
}

async fn session_info(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<super::SessionInfo>> {
    Ok(Json(state.store.read(&id, BenchSession::info)?))
}

async fn get_page(
    State(state): State<AppState>,
    Path((id, page)): Path<(String, usize)>,
) -> ApiResult<Json<PageResponse>> {
    let (ids, page_count) = state.store.read(&id, |s| s.page_ids(page).map(|ids| (ids, s.page_count())))??;
    let images = ids
        .into_iter()
        .map(|image| PageImageRef { url: format!("/sessions/{id}/images/{image}"), id: image })
        .collect();
    Ok(Json(PageResponse { session_id: id, page, page_count, images }))
}

async fn submit(
    State(state): State<AppState>,
    Path((id, page)): Path<(String, usize)>,
    Json(req): Json<SelectionsRequest>,
) -> ApiResult<Json<serde_json::Value>> {
    state.store.submit(&id, page, req.selections)?;
    let submitted = state.store.read(&id, |s| s.submitted_pages.len())?;
    Ok(Json(serde_json::json!({ "ok": true, "page": page, "submitted_pages": submitted })))
}

async fn score(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<super::BenchReport>> {
    Ok(Json(state.store.score(&id)?))
}

async fn report(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<super::BenchReport>> {
    Ok(Json(state.store.read(&id, BenchSession::report)??))
}

async fn image(
    State(state): State<AppState>,
    Path((id, image_id)): Path<(String, String)>,
) -> ApiResult<Response> {
    let (bytes, content_type) = state.store.read(&id, |s| s.image(&image_id))??;
    Ok(([(header::CONTENT_TYPE, content_type)], bytes).into_response())
}

fn local_origin(origin: &HeaderValue) -> bool {
    let Ok(origin) = origin.to_str() else { return false };
    let rest = origin.strip_prefix("http://").or_else(|| origin.strip_prefix("https://"));
    rest.is_some_and(|host| {
        let host = host.split(':').next().unwrap_or_default();
        matches!(host, "localhost" | "127.0.0.1" | "[::1]")
    })
}

/// Builds the HTTP routes over an existing store and pools.
pub fn router(store: Arc<SessionStore>, in_pool: ImagePool, out_pool: ImagePool, ui_dir: Option<PathBuf>) -> Router {
    let state = AppState { store, in_pool: Arc::new(in_pool), out_pool: Arc::new(out_pool) };
    let cors = CorsLayer::new()
        .allow_origin(AllowOrigin::predicate(|origin, _| local_origin(origin)))
        .allow_methods([Method::GET, Method::POST])
        .allow_headers([header::CONTENT_TYPE]);
    let app = Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(session_info))
        .route("/sessions/{id}/pages/{page}", get(get_page))
        .route("/sessions/{id}/pages/{page}/selections", post(submit))
        .route("/sessions/{id}/score", post(score))
        .route("/sessions/{id}/report", get(report))
        .route("/sessions/{id}/images/{image_id}", get(image))
        .with_state(state)
        .layer(cors);
    match ui_dir {
        Some(dir) => app.fallback_service(ServeDir::new(dir)),
        None => app,
    }
}

pub async fn serve(config: ServeConfig) -> Result<(), crate::Error> {
    let in_pool = ImagePool::scan(&config.in_pool)?;
    let out_pool = ImagePool::scan(&config.out_pool)?;
    let store = match &config.data_dir {
        Some(dir) => SessionStore::open(dir)?,
        None => SessionStore::ephemeral(),
    };
    let app = router(Arc::new(store), in_pool, out_pool, config.ui_dir.clone());
    let listener = tokio::net::TcpListener::bind(config.addr)
        .await
        .map_err(|e| crate::Error::io(config.addr.to_string(), e))?;
    eprintln!("bench service listening on http://{}", config.addr);
    axum::serve(listener, app).await.map_err(|e| crate::Error::io(config.addr.to_string(), e))
}
