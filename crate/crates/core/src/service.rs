//! HTTP preview service.
//!
//! | route                 | body                         | response                       |
//! |-----------------------|------------------------------|--------------------------------|
//! | `GET /transforms`     |                              | transform schemas (JSON)       |
//! | `POST /volumes`       | NIfTI bytes, gzip allowed    | `{volume_id, shape, spacing}`  |
//! | `POST /preview`       | [`PreviewRequest`] JSON      | PNG, id in `X-Preview-Id`      |
//! | `GET /history/{id}`   |                              | replayable pipeline JSON       |
//!
//! Errors are JSON `{"error": "..."}`: 400 for malformed input, 404 for an
//! unknown volume or preview, 422 when the pipeline fails or the slice is out
//! of bounds.

use std::collections::VecDeque;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Path, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::{json, Value};

use crate::error::Error;
use crate::image::{Image, ImageKind, Subject};
use crate::nifti;
use crate::render::render_slice;
use crate::rng::Rng;
use crate::schema::transform_schemas;
use crate::transforms::{history_as_pipeline, PipelineSpec};

pub const MAX_VOLUMES: usize = 4;
pub const MAX_PREVIEWS: usize = 256;
const IMAGE_KEY: &str = "image";

/// Least recently used store with a fixed capacity.
struct Lru<T> {
    capacity: usize,
    entries: VecDeque<(String, T)>,
}

impl<T: Clone> Lru<T> {
    fn new(capacity: usize) -> Self {
        Lru {
            capacity,
            entries: VecDeque::new(),
        }
    }

    fn insert(&mut self, key: String, value: T) {
        if self.entries.len() == self.capacity {
            self.entries.pop_front();
        }
        self.entries.push_back((key, value));
    }

    fn get(&mut self, key: &str) -> Option<T> {
        let pos = self.entries.iter().position(|(k, _)| k == key)?;
        let entry = self.entries.remove(pos)?;
        let value = entry.1.clone();
        self.entries.push_back(entry);
        Some(value)
    }
}

struct AppState {
    volumes: Mutex<Lru<Arc<Image>>>,
    previews: Mutex<Lru<Arc<Value>>>,
    next_id: AtomicU64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PreviewRequest {
    pub volume_id: String,
    pub pipeline: Value,
    #[serde(default)]
    pub seed: u64,
    pub axis: usize,
    pub index: usize,
    #[serde(default)]
    pub window: Option<[f64; 2]>,
}

struct ApiError(StatusCode, String);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(json!({ "error": self.1 }))).into_response()
    }
}

fn bad_request(e: impl ToString) -> ApiError {
    ApiError(StatusCode::BAD_REQUEST, e.to_string())
}

fn unprocessable(e: impl ToString) -> ApiError {
    ApiError(StatusCode::UNPROCESSABLE_ENTITY, e.to_string())
}

/// The service routes, ready to be served or driven in tests.
pub fn router() -> Router {
    let state = Arc::new(AppState {
        volumes: Mutex::new(Lru::new(MAX_VOLUMES)),
        previews: Mutex::new(Lru::new(MAX_PREVIEWS)),
        next_id: AtomicU64::new(1),
    });
    Router::new()
        .route("/transforms", get(list_transforms))
        .route("/volumes", post(upload_volume))
        .route("/preview", post(preview))
        .route("/history/{id}", get(history))
        .layer(DefaultBodyLimit::max(2 << 30))
        .with_state(state)
}

async fn list_transforms() -> Json<Value> {
    Json(transform_schemas())
}

async fn upload_volume(State(state): State<Arc<AppState>>, body: Bytes) -> Result<Json<Value>, ApiError> {
    let image = tokio::task::spawn_blocking(move || nifti::decode(&body, ImageKind::Scalar))
        .await
        .map_err(unprocessable)?
        .map_err(bad_request)?;
    let shape = image.shape().map_err(bad_request)?;
    let spacing = image.spacing();
    let id = format!("v{}", state.next_id.fetch_add(1, Ordering::Relaxed));
    state.volumes.lock().unwrap().insert(id.clone(), Arc::new(image));
    Ok(Json(json!({ "volume_id": id, "shape": shape, "spacing": spacing })))
}

async fn preview(State(state): State<Arc<AppState>>, body: Bytes) -> Result<Response, ApiError> {
    let req: PreviewRequest = serde_json::from_slice(&body).map_err(bad_request)?;
    let spec = PipelineSpec::from_value(req.pipeline).map_err(bad_request)?;
    let image = state
        .volumes
        .lock()
        .unwrap()
        .get(&req.volume_id)
        .ok_or_else(|| ApiError(StatusCode::NOT_FOUND, format!("unknown volume {}", req.volume_id)))?;
    let (axis, index, window, seed) = (req.axis, req.index, req.window, req.seed);
    let (png, history) = tokio::task::spawn_blocking(move || {
        let subject = Subject::new().with_image(IMAGE_KEY, (*image).clone());
        let out = spec.apply(subject, &mut Rng::new(seed))?;
        let png = render_slice(out.image(IMAGE_KEY)?, axis, index, window)?;
        let history = history_as_pipeline(&out).to_value()?;
        Ok::<_, Error>((png, history))
    })
    .await
    .map_err(unprocessable)?
    .map_err(unprocessable)?;
    let id = format!("p{}", state.next_id.fetch_add(1, Ordering::Relaxed));
    state.previews.lock().unwrap().insert(id.clone(), Arc::new(history));
    let mut response = ([(header::CONTENT_TYPE, "image/png")], png).into_response();
    response
        .headers_mut()
        .insert("x-preview-id", HeaderValue::from_str(&id).expect("ids are ascii"));
    Ok(response)
}

async fn history(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Json<Value>, ApiError> {
    let value = state
        .previews
        .lock()
        .unwrap()
        .get(&id)
        .ok_or_else(|| ApiError(StatusCode::NOT_FOUND, format!("unknown preview {id}")))?;
    Ok(Json((*value).clone()))
}

/// Serves until the process is stopped.
pub fn serve_blocking(host: &str, port: u16) -> crate::Result<()> {
    let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind((host, port)).await?;
        eprintln!("listening on http://{}", listener.local_addr()?);
        axum::serve(listener, router()).await?;
        Ok(())
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lru_evicts_least_recent() {
        let mut lru = Lru::new(2);
        lru.insert("a".into(), 1);
        lru.insert("b".into(), 2);
        assert_eq!(lru.get("a"), Some(1));
        lru.insert("c".into(), 3);
        assert_eq!(lru.get("b"), None);
        assert_eq!(lru.get("a"), Some(1));
        assert_eq!(lru.get("c"), Some(3));
    }
}
