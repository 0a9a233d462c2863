//! Local HTTP facade over the retargeting pipeline for the labeling studio.
//!
//! Uploaded rasters live in a bounded in-memory LRU store. Every retarget
//! request runs its own solve on a blocking worker thread.

use std::num::NonZeroUsize;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, State};
use axum::http::StatusCode;
use axum::response::{Html, IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use base64::Engine;
use lru::LruCache;
use serde::{Deserialize, Serialize};
use tower_http::services::ServeDir;

use retarget_core::error::PrescribeError;
use retarget_core::pipeline::JobMetrics;
use retarget_core::prescribe::DEFAULT_BETA;
use retarget_core::{retarget, Choice, FailureKind, LabelSet, RasterImage, RetargetError, RetargetJob, TargetSpec};

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    /// Uploaded images kept before the least recently used is evicted.
    pub max_sessions: usize,
    /// Largest accepted upload body in bytes.
    pub max_upload_bytes: usize,
    /// Built UI bundle served from `/`; a stub page is served without it.
    pub ui_dir: Option<PathBuf>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self { max_sessions: 16, max_upload_bytes: 32 << 20, ui_dir: None }
    }
}

pub struct AppState {
    images: Mutex<LruCache<String, Arc<RasterImage>>>,
    next_id: AtomicU64,
}

impl AppState {
    pub fn new(max_sessions: usize) -> Self {
        let cap = NonZeroUsize::new(max_sessions.max(1)).expect("capacity is at least one");
        Self { images: Mutex::new(LruCache::new(cap)), next_id: AtomicU64::new(1) }
    }

    fn insert(&self, image: RasterImage) -> String {
        let id = format!("img-{:08x}", self.next_id.fetch_add(1, Ordering::Relaxed));
        self.images.lock().expect("session store poisoned").put(id.clone(), Arc::new(image));
        id
    }

    fn get(&self, id: &str) -> Option<Arc<RasterImage>> {
        self.images.lock().expect("session store poisoned").get(id).cloned()
    }

    pub fn len(&self) -> usize {
        self.images.lock().expect("session store poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Serialize)]
pub struct ApiError {
    pub error: &'static str,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub suggested_beta: Option<f64>,
}

struct Failure(StatusCode, ApiError);

impl Failure {
    fn new(status: StatusCode, error: &'static str, message: impl Into<String>) -> Self {
        Failure(status, ApiError { error, message: message.into(), suggested_beta: None })
    }
}

impl IntoResponse for Failure {
    fn into_response(self) -> Response {
        (self.0, Json(self.1)).into_response()
    }
}

impl From<RetargetError> for Failure {
    fn from(e: RetargetError) -> Self {
        let kind = e.kind();
        let status = match kind {
            FailureKind::Input => StatusCode::BAD_REQUEST,
            FailureKind::Extremal => StatusCode::UNPROCESSABLE_ENTITY,
            FailureKind::Foldover => StatusCode::CONFLICT,
            FailureKind::Solver => StatusCode::INTERNAL_SERVER_ERROR,
        };
        let suggested_beta = match (&e, kind) {
            (RetargetError::Prescribe(PrescribeError::NeedsExtremal { suggested_beta, .. }), _) => Some(*suggested_beta),
            (_, FailureKind::Extremal) => Some(DEFAULT_BETA),
            _ => None,
        };
        Failure(status, ApiError { error: kind.code(), message: e.to_string(), suggested_beta })
    }
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct UploadResponse {
    pub id: String,
    pub width: u32,
    pub height: u32,
}

/// Body of `POST /api/retarget`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RetargetRequest {
    /// Id returned by `POST /api/images`.
    #[serde(default)]
    pub image_id: Option<String>,
    /// Inline PNG or JPEG, base64 encoded, used when no id is given.
    #[serde(default)]
    pub image_base64: Option<String>,
    #[serde(default)]
    pub labels: LabelSet,
    /// Width ratio; ignored when `width` and `height` are both given.
    #[serde(default)]
    pub ratio: Option<f64>,
    #[serde(default)]
    pub width: Option<u32>,
    #[serde(default)]
    pub height: Option<u32>,
    #[serde(default)]
    pub choice: Choice,
    #[serde(default)]
    pub chessboard: bool,
    #[serde(default)]
    pub extremal: bool,
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default = "default_vertices")]
    pub mesh_vertices: usize,
    /// Output size factor in (0, 1] for quick previews of ratio requests.
    #[serde(default = "default_preview_scale")]
    pub preview_scale: f64,
    /// Return the source and warped mesh for an overlay.
    #[serde(default)]
    pub include_mesh: bool,
}

fn default_beta() -> f64 {
    DEFAULT_BETA
}

fn default_vertices() -> usize {
    retarget_core::mesh::DEFAULT_VERTEX_COUNT
}

fn default_preview_scale() -> f64 {
    1.0
}

/// Mesh overlay in output pixel coordinates, `y` down like the preview.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MeshOverlay {
    pub source: Vec<[f64; 2]>,
    pub warped: Vec<[f64; 2]>,
    pub faces: Vec<[usize; 3]>,
}

#[derive(Debug, Serialize)]
pub struct RetargetResponse {
    pub width: u32,
    pub height: u32,
    /// Base64 PNG of the retargeted image.
    pub png_base64: String,
    pub metrics: JobMetrics,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mesh: Option<MeshOverlay>,
}

fn target_of(req: &RetargetRequest, src: &RasterImage) -> Result<TargetSpec, Failure> {
    let scale = req.preview_scale;
    if !(scale > 0.0 && scale <= 1.0) {
        return Err(Failure::new(StatusCode::BAD_REQUEST, "input", format!("preview_scale must lie in (0, 1], got {scale}")));
    }
    match (req.ratio, req.width, req.height) {
        (_, Some(width), Some(height)) => Ok(TargetSpec::Dimensions { width, height }),
        (Some(r), None, None) if scale == 1.0 => Ok(TargetSpec::Ratio(r)),
        (Some(r), None, None) => {
            if !(r.is_finite() && r > 0.0) {
                return Err(Failure::new(StatusCode::BAD_REQUEST, "input", format!("ratio must be positive, got {r}")));
            }
            let px = |v: f64| (v * scale).round().max(2.0) as u32;
            Ok(TargetSpec::Dimensions { width: px(r * src.width() as f64), height: px(src.height() as f64) })
        }
        _ => Err(Failure::new(StatusCode::BAD_REQUEST, "input", "give either ratio or both width and height")),
    }
}

fn run_retarget(src: &RasterImage, req: &RetargetRequest) -> Result<RetargetResponse, Failure> {
    let job = RetargetJob {
        target: target_of(req, src)?,
        choice: req.choice,
        chessboard: req.chessboard,
        force_extremal: req.extremal,
        beta: req.beta,
        mesh_vertices: req.mesh_vertices,
    };
    let out = retarget(src, &req.labels, &job)?;
    let png = out.image.encode_png()?;
    let sol = &out.solution;
    let mesh = req.include_mesh.then(|| {
        let (sh, th) = (src.height() as f64, sol.plan.target_height);
        let (sx, sy) = (out.image.width() as f64 / sol.plan.target_width, out.image.height() as f64 / th);
        MeshOverlay {
            source: sol.source_mesh.vertices().iter().map(|p| [p.x, sh - p.y]).collect(),
            warped: sol.positions.iter().map(|p| [p.x * sx, (th - p.y) * sy]).collect(),
            faces: sol.source_mesh.faces().to_vec(),
        }
    });
    Ok(RetargetResponse {
        width: out.image.width(),
        height: out.image.height(),
        png_base64: base64::engine::general_purpose::STANDARD.encode(png),
        metrics: sol.metrics.clone(),
        mesh,
    })
}

async fn upload(State(state): State<Arc<AppState>>, body: Bytes) -> Result<Json<UploadResponse>, Failure> {
    if body.is_empty() {
        return Err(Failure::new(StatusCode::BAD_REQUEST, "input", "empty upload"));
    }
    let image = RasterImage::decode(&body)
        .map_err(|e| Failure::new(StatusCode::UNSUPPORTED_MEDIA_TYPE, "input", format!("unsupported image: {e}")))?;
    let (width, height) = (image.width(), image.height());
    let id = state.insert(image);
    Ok(Json(UploadResponse { id, width, height }))
}

async fn retarget_handler(
    State(state): State<Arc<AppState>>,
    body: Bytes,
) -> Result<Json<RetargetResponse>, Failure> {
    // parsed by hand so malformed documents are 400, keeping 422 for extremal failures
    let req: RetargetRequest = serde_json::from_slice(&body)
        .map_err(|e| Failure::new(StatusCode::BAD_REQUEST, "input", format!("malformed request: {e}")))?;
    let src = match (&req.image_id, &req.image_base64) {
        (Some(id), _) => state
            .get(id)
            .ok_or_else(|| Failure::new(StatusCode::NOT_FOUND, "not_found", format!("unknown image id {id}")))?,
        (None, Some(inline)) => {
            let bytes = base64::engine::general_purpose::STANDARD
                .decode(inline)
                .map_err(|e| Failure::new(StatusCode::BAD_REQUEST, "input", format!("inline image is not base64: {e}")))?;
            let image = RasterImage::decode(&bytes)
                .map_err(|e| Failure::new(StatusCode::UNSUPPORTED_MEDIA_TYPE, "input", format!("unsupported image: {e}")))?;
            Arc::new(image)
        }
        (None, None) => return Err(Failure::new(StatusCode::BAD_REQUEST, "input", "request needs image_id or image_base64")),
    };
    tokio::task::spawn_blocking(move || run_retarget(&src, &req))
        .await
        .map_err(|e| Failure::new(StatusCode::INTERNAL_SERVER_ERROR, "solver", e.to_string()))?
        .map(Json)
}

const STUB_PAGE: &str = "<!doctype html>
<html><head><meta charset=\"utf-8\"><title>retarget studio</title></head>
<body>
<h1>retarget service</h1>
<p>No UI bundle is configured. Start the service with <code>--ui-dir</code> pointing at the built studio.</p>
<ul>
<li><code>POST /api/images</code> with a PNG or JPEG body returns <code>{id, width, height}</code>.</li>
<li><code>POST /api/retarget</code> with a JSON request returns the preview and metrics.</li>
</ul>
</body></html>
";

async fn stub_index() -> Html<&'static str> {
    Html(STUB_PAGE)
}

pub fn router(config: &ServiceConfig) -> Router {
    let state = Arc::new(AppState::new(config.max_sessions));
    router_with_state(config, state)
}

pub fn router_with_state(config: &ServiceConfig, state: Arc<AppState>) -> Router {
    let api = Router::new()
        .route("/api/images", post(upload).layer(DefaultBodyLimit::max(config.max_upload_bytes)))
        .route("/api/retarget", post(retarget_handler))
        .with_state(state);
    match config.ui_dir.as_ref().filter(|d| d.join("index.html").is_file()) {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api.route("/", get(stub_index)),
    }
}
