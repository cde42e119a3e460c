use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, RwLock};

use axum::body::Bytes;
use axum::extract::{Path, Request, State};
use axum::http::{header, HeaderValue, Method, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde_json::{json, Value};
use tower_http::cors::{AllowOrigin, Any, CorsLayer};
use tower_http::services::ServeDir;

use toolde_core::review::{JudgmentSubmission, ReviewBatch, CHECKLIST_QUESTIONS};

use crate::store::{ReviewStore, SubmitError};
use crate::ReviewError;

#[derive(Clone, Debug)]
pub struct ServeConfig {
    pub batches: Vec<PathBuf>,
    pub journal: PathBuf,
    pub bind: SocketAddr,
    /// Built review UI, served at `/`.
    pub static_dir: Option<PathBuf>,
    /// Shared token required as `Authorization: Bearer <token>` on the API.
    pub token: Option<String>,
    /// Allowed browser origin; any origin when unset.
    pub cors_origin: Option<String>,
}

#[derive(Clone)]
pub struct AppState {
    store: Arc<RwLock<ReviewStore>>,
    token: Option<Arc<str>>,
}

impl AppState {
    pub fn new(store: ReviewStore, token: Option<String>) -> Self {
        Self {
            store: Arc::new(RwLock::new(store)),
            token: token.map(Into::into),
        }
    }
}

fn error(status: StatusCode, message: impl Into<String>) -> Response {
    (status, Json(json!({ "error": message.into() }))).into_response()
}

fn not_found(what: &str, id: &str) -> Response {
    error(StatusCode::NOT_FOUND, format!("unknown {what} `{id}`"))
}

fn batch_summary(store: &ReviewStore, batch: &ReviewBatch) -> Value {
    json!({
        "batch_id": batch.batch_id,
        "items": batch.items.len(),
        "progress": store.progress(&batch.batch_id),
    })
}

async fn list_batches(State(state): State<AppState>) -> Response {
    let store = state.store.read().expect("store lock");
    let batches: Vec<Value> = store.batches().map(|b| batch_summary(&store, b)).collect();
    Json(batches).into_response()
}

async fn get_batch(State(state): State<AppState>, Path(id): Path<String>) -> Response {
    let store = state.store.read().expect("store lock");
    let Some(batch) = store.batch(&id) else {
        return not_found("batch", &id);
    };
    let items: Vec<Value> = batch
        .items
        .iter()
        .map(|i| json!({"item_id": i.item_id, "verdict": store.verdict(&i.item_id)}))
        .collect();
    let checklist: Vec<Value> = CHECKLIST_QUESTIONS
        .iter()
        .map(|(key, question)| json!({"key": key, "question": question}))
        .collect();
    Json(json!({
        "batch_id": batch.batch_id,
        "seed": batch.seed,
        "items": items,
        "progress": store.progress(&id),
        "checklist": checklist,
    }))
    .into_response()
}

async fn get_item(State(state): State<AppState>, Path(id): Path<String>) -> Response {
    let store = state.store.read().expect("store lock");
    let Some((batch, item)) = store.item(&id) else {
        return not_found("item", &id);
    };
    Json(json!({
        "batch_id": batch.batch_id,
        "item": item,
        "verdict": store.verdict(&id),
        "judgment": store.judgment(&id),
    }))
    .into_response()
}

async fn post_judgment(
    State(state): State<AppState>,
    Path(id): Path<String>,
    body: Bytes,
) -> Response {
    let value: Value =
        match serde_json::from_slice(&body) {
            Ok(v) => v,
            Err(e) => return (
                StatusCode::BAD_REQUEST,
                Json(
                    json!({"errors": [{"field": "body", "message": format!("invalid JSON: {e}")}]}),
                ),
            )
                .into_response(),
        };
    let submission = match JudgmentSubmission::from_json(&value) {
        Ok(s) => s,
        Err(errors) => {
            return (StatusCode::BAD_REQUEST, Json(json!({ "errors": errors }))).into_response()
        }
    };
    let mut store = state.store.write().expect("store lock");
    match store.submit(&id, submission) {
        Ok(record) => Json(record).into_response(),
        Err(SubmitError::UnknownItem) => not_found("item", &id),
        Err(SubmitError::AlreadyJudged(existing)) => (
            StatusCode::CONFLICT,
            Json(json!({"error": format!("item `{id}` is already judged"), "judgment": existing})),
        )
            .into_response(),
        Err(SubmitError::Io(e)) => {
            log::error!("journal write failed: {e}");
            error(
                StatusCode::INTERNAL_SERVER_ERROR,
                "could not persist judgment",
            )
        }
    }
}

async fn get_progress(State(state): State<AppState>, Path(id): Path<String>) -> Response {
    let store = state.store.read().expect("store lock");
    match store.progress(&id) {
        Some(p) => Json(json!({
            "total": p.total,
            "pending": p.pending,
            "pass": p.pass,
            "fail": p.fail,
            "judged": p.judged(),
        }))
        .into_response(),
        None => not_found("batch", &id),
    }
}

async fn get_export(State(state): State<AppState>, Path(id): Path<String>) -> Response {
    let store = state.store.read().expect("store lock");
    match store.export(&id) {
        Some(export) => Json(export).into_response(),
        None => not_found("batch", &id),
    }
}

async fn require_token(State(state): State<AppState>, request: Request, next: Next) -> Response {
    if let Some(token) = &state.token {
        // Preflight requests carry no credentials.
        if request.method() != Method::OPTIONS {
            let expected = format!("Bearer {token}");
            let given = request
                .headers()
                .get(header::AUTHORIZATION)
                .and_then(|v| v.to_str().ok());
            if given != Some(expected.as_str()) {
                return error(StatusCode::UNAUTHORIZED, "missing or wrong bearer token");
            }
        }
    }
    next.run(request).await
}

pub fn router(state: AppState, static_dir: Option<PathBuf>, cors_origin: Option<&str>) -> Router {
    let origin = match cors_origin.and_then(|o| HeaderValue::from_str(o).ok()) {
        Some(o) => AllowOrigin::exact(o),
        None => AllowOrigin::from(Any),
    };
    let cors = CorsLayer::new()
        .allow_origin(origin)
        .allow_methods([Method::GET, Method::POST])
        .allow_headers([header::CONTENT_TYPE, header::AUTHORIZATION]);
    let api = Router::new()
        .route("/batches", get(list_batches))
        .route("/batches/{id}", get(get_batch))
        .route("/batches/{id}/progress", get(get_progress))
        .route("/batches/{id}/export", get(get_export))
        .route("/items/{id}", get(get_item))
        .route("/items/{id}/judgment", post(post_judgment))
        .route_layer(middleware::from_fn_with_state(state.clone(), require_token))
        .with_state(state);
    let app = Router::new().nest("/api", api);
    let app = match static_dir {
        Some(dir) => app.fallback_service(ServeDir::new(dir)),
        None => app,
    };
    app.layer(cors)
}

/// Loads batches, replays the journal and serves until interrupted.
///
/// The bound address is printed to stdout as `listening on http://ADDR`.
pub async fn serve(config: ServeConfig) -> Result<(), ReviewError> {
    let batches = config
        .batches
        .iter()
        .map(ReviewBatch::load)
        .collect::<Result<Vec<_>, _>>()?;
    let store = ReviewStore::open(batches, &config.journal)?;
    let app = router(
        AppState::new(store, config.token.clone()),
        config.static_dir.clone(),
        config.cors_origin.as_deref(),
    );
    let listener = tokio::net::TcpListener::bind(config.bind)
        .await
        .map_err(|source| ReviewError::Bind {
            addr: config.bind.to_string(),
            source,
        })?;
    let addr = listener.local_addr()?;
    println!("listening on http://{addr}");
    use std::io::Write as _;
    std::io::stdout().flush()?;
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
