//! HTTP backend for the cluster review UI.
//!
//! Serves the per-cluster review manifests, accepts one label per cluster
//! (last write wins, every change bumps a revision counter), persists the
//! label map after each change and exports the labeled dataset on finalize.
//! Input artifacts are only read; the label map and the export are the only
//! files written.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, MutexGuard};

use axum::body::Body;
use axum::extract::{Path as UrlPath, Request, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post, put};
use axum::{Json, Router};
use log::info;
use percent_encoding::{utf8_percent_encode, NON_ALPHANUMERIC};
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;
use tower::ServiceExt;
use tower_http::services::{ServeDir, ServeFile};

use clustervote::annotate::{self, AnnotateError, ClusterManifest, Exemplar, LabelBoard};
use clustervote::dataio::{self, DataError};
use clustervote::{ConsensusResult, SampleId, SampleManifest};

#[derive(Debug, Error)]
pub enum ServerError {
    #[error("label map and export must be distinct files, both {0}")]
    SameOutput(PathBuf),
    #[error("review manifests do not match the consensus clusters")]
    ClusterMismatch,
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Everything the service reads, plus the two files it may write.
#[derive(Debug, Clone)]
pub struct Workspace {
    pub manifest: SampleManifest,
    pub consensus: ConsensusResult,
    pub clusters: Vec<ClusterManifest>,
    /// Rewritten after every label change; loaded on startup if present.
    pub label_map_path: PathBuf,
    pub output_path: PathBuf,
    /// Base for relative thumbnail paths in the manifest.
    pub thumbnail_root: PathBuf,
}

pub struct AppState {
    manifest: SampleManifest,
    consensus: ConsensusResult,
    clusters: Vec<ClusterManifest>,
    by_id: HashMap<SampleId, usize>,
    label_map_path: PathBuf,
    output_path: PathBuf,
    thumbnail_root: PathBuf,
    board: Mutex<LabelBoard>,
}

impl AppState {
    pub fn new(ws: Workspace) -> Result<Self, ServerError> {
        if ws.label_map_path == ws.output_path {
            return Err(ServerError::SameOutput(ws.output_path));
        }
        let indices: Vec<usize> = ws.clusters.iter().map(|c| c.cluster_index).collect();
        if indices != ws.consensus.nonempty_clusters() {
            return Err(ServerError::ClusterMismatch);
        }
        ws.manifest.check_ids(&ws.consensus.ids)?;
        let board = if ws.label_map_path.exists() {
            let map = dataio::load_label_map(&ws.label_map_path)?;
            info!("resuming from {}", ws.label_map_path.display());
            LabelBoard::with_labels(&ws.consensus, &map)
        } else {
            LabelBoard::new(&ws.consensus)
        };
        let by_id = ws.consensus.ids.iter().cloned().enumerate().map(|(i, id)| (id, i)).collect();
        Ok(AppState {
            manifest: ws.manifest,
            consensus: ws.consensus,
            clusters: ws.clusters,
            by_id,
            label_map_path: ws.label_map_path,
            output_path: ws.output_path,
            thumbnail_root: ws.thumbnail_root,
            board: Mutex::new(board),
        })
    }

    fn board(&self) -> MutexGuard<'_, LabelBoard> {
        // a panic mid-update leaves the board itself consistent
        self.board.lock().unwrap_or_else(|e| e.into_inner())
    }

    fn cluster(&self, index: usize) -> Result<&ClusterManifest, ApiError> {
        self.clusters.iter().find(|c| c.cluster_index == index).ok_or(ApiError::NotFound(format!("no cluster {index}")))
    }

    fn with_label(&self, cluster: &ClusterManifest, board: &LabelBoard) -> ClusterManifest {
        ClusterManifest { assigned_label: board.label(cluster.cluster_index).map(str::to_owned), ..cluster.clone() }
    }

    fn thumbnail_file(&self, id: &str) -> Option<PathBuf> {
        let i = *self.by_id.get(&SampleId::new(id).ok()?)?;
        let rel = self.manifest.entries[i].thumbnail_path.as_ref()?;
        Some(self.thumbnail_root.join(rel))
    }
}

pub fn thumbnail_url(id: &SampleId) -> String {
    format!("/api/samples/{}/thumbnail", utf8_percent_encode(id.as_str(), NON_ALPHANUMERIC))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Status {
    pub n: usize,
    pub retained: usize,
    pub rejected: usize,
    pub clusters: usize,
    pub labeled_clusters: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExemplarView {
    #[serde(flatten)]
    pub exemplar: Exemplar,
    /// Present only when the sample has a thumbnail.
    pub thumbnail_url: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterDetail {
    pub cluster_index: usize,
    pub size: usize,
    pub members: Vec<SampleId>,
    pub exemplars: Vec<ExemplarView>,
    pub assigned_label: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelRequest {
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Revision {
    pub revision: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Finalized {
    pub labeled_count: usize,
    pub output_path: String,
}

#[derive(Debug)]
pub enum ApiError {
    NotFound(String),
    BadRequest(String),
    Unlabeled(Vec<usize>),
    Internal(String),
}

impl From<AnnotateError> for ApiError {
    fn from(e: AnnotateError) -> Self {
        match e {
            AnnotateError::UnknownCluster(_) => ApiError::NotFound(e.to_string()),
            AnnotateError::EmptyLabel => ApiError::BadRequest(e.to_string()),
            AnnotateError::Unlabeled(list) => ApiError::Unlabeled(list),
            other => ApiError::Internal(other.to_string()),
        }
    }
}

impl From<DataError> for ApiError {
    fn from(e: DataError) -> Self {
        ApiError::Internal(e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, body) = match self {
            ApiError::NotFound(m) => (StatusCode::NOT_FOUND, json!({ "error": m })),
            ApiError::BadRequest(m) => (StatusCode::BAD_REQUEST, json!({ "error": m })),
            ApiError::Unlabeled(list) => {
                (StatusCode::CONFLICT, json!({ "error": "clusters still unlabeled", "unlabeled": list }))
            }
            ApiError::Internal(m) => {
                log::error!("{m}");
                (StatusCode::INTERNAL_SERVER_ERROR, json!({ "error": m }))
            }
        };
        (status, Json(body)).into_response()
    }
}

type Shared = Arc<AppState>;

async fn status(State(s): State<Shared>) -> Json<Status> {
    let board = s.board();
    Json(Status {
        n: s.consensus.len(),
        retained: s.consensus.retained_count(),
        rejected: s.consensus.rejected_count(),
        clusters: s.clusters.len(),
        labeled_clusters: board.labeled_count(),
    })
}

async fn list_clusters(State(s): State<Shared>) -> Json<Vec<ClusterManifest>> {
    let board = s.board();
    Json(s.clusters.iter().map(|c| s.with_label(c, &board)).collect())
}

async fn cluster_detail(State(s): State<Shared>, UrlPath(i): UrlPath<usize>) -> Result<Json<ClusterDetail>, ApiError> {
    let c = s.with_label(s.cluster(i)?, &s.board());
    let exemplars = c
        .exemplars
        .into_iter()
        .map(|e| ExemplarView { thumbnail_url: e.thumbnail_path.as_ref().map(|_| thumbnail_url(&e.id)), exemplar: e })
        .collect();
    Ok(Json(ClusterDetail {
        cluster_index: c.cluster_index,
        size: c.size,
        members: c.members,
        exemplars,
        assigned_label: c.assigned_label,
    }))
}

async fn thumbnail(State(s): State<Shared>, UrlPath(id): UrlPath<String>, req: Request) -> Result<Response, ApiError> {
    let path = s.thumbnail_file(&id).ok_or_else(|| ApiError::NotFound(format!("no thumbnail for {id:?}")))?;
    let res = ServeFile::new(path).oneshot(req).await.map_err(|e| ApiError::Internal(e.to_string()))?;
    Ok(res.map(Body::new))
}

/// Applies `change` to the board and persists the resulting label map
/// before releasing the lock, so the file always matches a revision.
fn mutate(
    s: &AppState,
    change: impl FnOnce(&mut LabelBoard) -> Result<u64, AnnotateError>,
) -> Result<Json<Revision>, ApiError> {
    let mut board = s.board();
    let mut next = board.clone();
    let revision = change(&mut next)?;
    dataio::write_json(&s.label_map_path, &next.label_map())?;
    *board = next;
    Ok(Json(Revision { revision }))
}

async fn set_label(
    State(s): State<Shared>,
    UrlPath(i): UrlPath<usize>,
    Json(body): Json<LabelRequest>,
) -> Result<Json<Revision>, ApiError> {
    mutate(&s, |b| b.set(i, &body.label))
}

async fn clear_label(State(s): State<Shared>, UrlPath(i): UrlPath<usize>) -> Result<Json<Revision>, ApiError> {
    mutate(&s, |b| b.clear(i))
}

async fn finalize(State(s): State<Shared>) -> Result<Json<Finalized>, ApiError> {
    let snapshot = s.board().clone();
    let labeled_count = annotate::finalize(&s.manifest, &s.consensus, &snapshot, &s.output_path)?;
    info!("finalized {labeled_count} samples to {}", s.output_path.display());
    Ok(Json(Finalized { labeled_count, output_path: s.output_path.display().to_string() }))
}

/// The API routes, plus the static UI bundle at `/` when `ui_dir` is given.
pub fn router(state: Arc<AppState>, ui_dir: Option<&Path>) -> Router {
    let api = Router::new()
        .route("/api/status", get(status))
        .route("/api/clusters", get(list_clusters))
        .route("/api/clusters/{i}", get(cluster_detail))
        .route("/api/clusters/{i}/label", put(set_label).delete(clear_label))
        .route("/api/samples/{id}/thumbnail", get(thumbnail))
        .route("/api/finalize", post(finalize))
        .with_state(state);
    match ui_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir).append_index_html_on_directories(true)),
        None => api,
    }
}

/// Binds `addr` and serves until ctrl-c.
pub async fn serve(addr: SocketAddr, app: Router) -> Result<(), ServerError> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    info!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
