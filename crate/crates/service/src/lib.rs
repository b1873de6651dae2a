//! HTTP facade for the map explorer.
//!
//! One graph is loaded per session. Discovery and zoom requests become
//! asynchronous jobs that run one at a time on the blocking thread pool;
//! clients poll `/api/jobs/{id}` and then fetch the registered map. Every
//! GET handler only reads a snapshot of the store.

mod error;
mod store;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, Mutex, MutexGuard};

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{Html, IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use landmark_core::optimizer::IterationRecord;
use landmark_core::pipeline::{self, Outcome};
use landmark_core::{AttributedGraph, CMode, Hyperparams};
use log::{info, warn};
use serde::{Deserialize, Serialize};
use tower_http::services::ServeDir;

pub use error::ApiError;
pub use store::{Job, JobState, LineageNode};
use store::{Store, StoredMap};

pub struct Config {
    pub graph: Option<AttributedGraph>,
    /// Hyperparameters used where a request leaves a field out.
    pub defaults: Hyperparams,
    /// Directory with the built explorer; a placeholder page is served at
    /// `/` when absent.
    pub assets: Option<PathBuf>,
}

struct Inner {
    graph: Option<Arc<AttributedGraph>>,
    defaults: Hyperparams,
    store: Mutex<Store>,
    /// Held by the running job; waiting jobs stay queued.
    runner: tokio::sync::Mutex<()>,
}

#[derive(Clone)]
pub struct AppState(Arc<Inner>);

impl AppState {
    pub fn new(graph: Option<AttributedGraph>, defaults: Hyperparams) -> Self {
        AppState(Arc::new(Inner {
            graph: graph.map(Arc::new),
            defaults,
            store: Mutex::new(Store::default()),
            runner: tokio::sync::Mutex::new(()),
        }))
    }

    fn store(&self) -> MutexGuard<'_, Store> {
        // a panicking job cannot leave the store half-written: every update
        // is a single insert or field assignment
        self.0.store.lock().unwrap_or_else(|e| e.into_inner())
    }

    fn graph(&self) -> Result<Arc<AttributedGraph>, ApiError> {
        self.0.graph.clone().ok_or_else(ApiError::no_graph)
    }
}

/// Optional overrides on top of the session defaults, or the parent fit
/// for zooms.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HyperparamsPatch {
    pub alpha: Option<f64>,
    pub alpha_r: Option<f64>,
    pub alpha_x: Option<f64>,
    pub beta: Option<f64>,
    /// `"unit"` or `"mean"`.
    pub c_mode: Option<String>,
    pub c: Option<f64>,
    pub seed: Option<u64>,
    pub max_iters: Option<usize>,
    pub tol: Option<f64>,
}

impl HyperparamsPatch {
    pub fn apply(&self, base: &Hyperparams) -> Result<Hyperparams, ApiError> {
        let mut h = base.clone();
        if let Some(v) = self.alpha {
            h.alpha = v;
        }
        if let Some(v) = self.alpha_r {
            h.alpha_r = v;
        }
        if let Some(v) = self.alpha_x {
            h.alpha_x = v;
        }
        if let Some(v) = self.beta {
            h.beta = v;
        }
        if let Some(v) = self.seed {
            h.seed = v;
        }
        if let Some(v) = self.max_iters {
            h.max_outer = v;
        }
        if let Some(v) = self.tol {
            h.tol = v;
        }
        let c = self.c.or(match base.c_mode {
            CMode::Unit { c } => Some(c),
            CMode::Mean => None,
        });
        match self.c_mode.as_deref() {
            None if self.c.is_some() => h.c_mode = CMode::Unit { c: c.unwrap_or(1.0) },
            None => {}
            Some("unit") => h.c_mode = CMode::Unit { c: c.unwrap_or(1.0) },
            Some("mean") => h.c_mode = CMode::Mean,
            Some(other) => return Err(ApiError::bad_request(format!("unknown c_mode '{other}'"))),
        }
        if h.max_outer == 0 {
            return Err(ApiError::bad_request("max_iters must be at least 1"));
        }
        h.validate().map_err(|e| ApiError::bad_request(e.to_string()))?;
        Ok(h)
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscoverRequest {
    pub k: usize,
    #[serde(default)]
    pub hyperparams: HyperparamsPatch,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ZoomRequest {
    pub split_role: usize,
    /// Defaults to the parent fit's beta.
    pub beta: Option<f64>,
    #[serde(default)]
    pub hyperparams: HyperparamsPatch,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct JobAccepted {
    pub job_id: String,
}

#[derive(Debug, Serialize)]
struct GraphSummary {
    n_nodes: usize,
    n_edges: usize,
    n_attrs: usize,
    directed: bool,
    attr_names: Vec<String>,
}

#[derive(Debug, Serialize)]
struct MapSummary {
    map_id: String,
    parent: Option<String>,
    landmark_ids: Vec<String>,
}

#[derive(Debug, Serialize)]
struct Lineage {
    roots: Vec<LineageNode>,
}

fn body<T>(payload: Result<Json<T>, JsonRejection>) -> Result<T, ApiError> {
    payload
        .map(|Json(v)| v)
        .map_err(|e| ApiError::bad_request(e.body_text()))
}

async fn discover(
    State(state): State<AppState>,
    payload: Result<Json<DiscoverRequest>, JsonRejection>,
) -> Result<(StatusCode, Json<JobAccepted>), ApiError> {
    let g = state.graph()?;
    let req = body(payload)?;
    if req.k == 0 || req.k >= g.n_nodes() {
        return Err(ApiError::bad_request(format!(
            "k must lie in [1, {}), got {}",
            g.n_nodes(),
            req.k
        )));
    }
    let h = req.hyperparams.apply(&state.0.defaults)?;
    if h.alpha > 0.0 && g.n_attrs() == 0 {
        return Err(ApiError::bad_request("alpha > 0 needs node attributes, the graph has none"));
    }
    let job_id = state.store().new_job("discover", h.max_outer, None);
    let k = req.k;
    spawn_job(state, job_id.clone(), None, move |obs| pipeline::discover(&g, k, &h, obs));
    Ok((StatusCode::ACCEPTED, Json(JobAccepted { job_id })))
}

async fn zoom(
    State(state): State<AppState>,
    Path(map_id): Path<String>,
    payload: Result<Json<ZoomRequest>, JsonRejection>,
) -> Result<(StatusCode, Json<JobAccepted>), ApiError> {
    let g = state.graph()?;
    let req = body(payload)?;
    let (parent_doc, parent_ids) = {
        let store = state.store();
        let m = store.maps.get(&map_id).ok_or_else(|| ApiError::not_found("map", &map_id))?;
        (m.model_doc.clone(), m.landmark_ids.clone())
    };
    if req.split_role >= parent_ids.len() {
        return Err(ApiError::bad_request(format!(
            "split_role {} out of range for a map with {} landmarks",
            req.split_role,
            parent_ids.len()
        )));
    }
    // unspecified fields follow the parent fit, like the CLI
    let mut h = req.hyperparams.apply(&parent_doc.hyperparams)?;
    if let Some(beta) = req.beta {
        h.beta = beta;
        h.validate().map_err(|e| ApiError::bad_request(e.to_string()))?;
    }
    let job_id = state.store().new_job("zoom", h.max_outer, Some(map_id.clone()));
    let split = req.split_role;
    spawn_job(state, job_id.clone(), Some(map_id), move |obs| {
        pipeline::zoom_model(&g, &parent_doc, Some(parent_ids), split, h.beta, &h, obs)
    });
    Ok((StatusCode::ACCEPTED, Json(JobAccepted { job_id })))
}

fn spawn_job<F>(state: AppState, job_id: String, parent: Option<String>, work: F)
where
    F: FnOnce(&mut dyn FnMut(&IterationRecord)) -> landmark_core::Result<Outcome> + Send + 'static,
{
    tokio::spawn(async move {
        let _turn = state.0.runner.lock().await;
        if let Some(job) = state.store().job_mut(&job_id) {
            job.status = JobState::Running;
        }
        info!("job {job_id} started");
        let st = state.clone();
        let jid = job_id.clone();
        let result = tokio::task::spawn_blocking(move || {
            let mut observe = |rec: &IterationRecord| {
                if let Some(job) = st.store().job_mut(&jid) {
                    job.iter = rec.iter;
                    job.progress = rec.iter as f64 / rec.max_outer.max(1) as f64;
                }
            };
            work(&mut observe)
        })
        .await;
        let outcome = match result {
            Ok(Ok(outcome)) => register(&state, outcome, parent),
            Ok(Err(e)) => Err(e.to_string()),
            Err(e) => Err(format!("job aborted: {e}")),
        };
        let mut store = state.store();
        if let Some(job) = store.job_mut(&job_id) {
            match outcome {
                Ok(map_id) => {
                    info!("job {job_id} produced map {map_id}");
                    job.status = JobState::Done;
                    job.progress = 1.0;
                    job.map_id = Some(map_id);
                }
                Err(msg) => {
                    warn!("job {job_id} failed: {msg}");
                    job.status = JobState::Failed;
                    job.error = Some(msg);
                }
            }
        }
    });
}

fn register(state: &AppState, out: Outcome, parent: Option<String>) -> Result<String, String> {
    let map_json = out.map_doc.to_json().map_err(|e| e.to_string())?;
    let stored = StoredMap {
        parent,
        children: Vec::new(),
        model_doc: Arc::new(out.model_doc),
        map_json: Arc::new(map_json),
        coords_tsv: Arc::new(out.map.coords_tsv()),
        landmark_ids: out.map.landmark_ids.clone(),
        split_landmark: out.map.lineage.map(|l| l.split_landmark),
    };
    Ok(state.store().insert_map(stored))
}

async fn get_job(State(state): State<AppState>, Path(job_id): Path<String>) -> Result<Json<Job>, ApiError> {
    state
        .store()
        .jobs
        .get(&job_id)
        .cloned()
        .map(Json)
        .ok_or_else(|| ApiError::not_found("job", &job_id))
}

async fn get_map(State(state): State<AppState>, Path(map_id): Path<String>) -> Result<Response, ApiError> {
    let json = state
        .store()
        .maps
        .get(&map_id)
        .map(|m| m.map_json.clone())
        .ok_or_else(|| ApiError::not_found("map", &map_id))?;
    Ok(([(header::CONTENT_TYPE, "application/json")], json.as_str().to_owned()).into_response())
}

async fn get_coords(State(state): State<AppState>, Path(map_id): Path<String>) -> Result<Response, ApiError> {
    let tsv = state
        .store()
        .maps
        .get(&map_id)
        .map(|m| m.coords_tsv.clone())
        .ok_or_else(|| ApiError::not_found("map", &map_id))?;
    Ok((
        [(header::CONTENT_TYPE, "text/tab-separated-values; charset=utf-8")],
        tsv.as_str().to_owned(),
    )
        .into_response())
}

async fn list_maps(State(state): State<AppState>) -> Json<Vec<MapSummary>> {
    let store = state.store();
    Json(
        store
            .maps
            .iter()
            .map(|(id, m)| MapSummary {
                map_id: id.clone(),
                parent: m.parent.clone(),
                landmark_ids: m.landmark_ids.clone(),
            })
            .collect(),
    )
}

async fn lineage(State(state): State<AppState>) -> Json<Lineage> {
    Json(Lineage {
        roots: state.store().lineage(),
    })
}

async fn graph_summary(State(state): State<AppState>) -> Result<Json<GraphSummary>, ApiError> {
    let g = state.graph()?;
    Ok(Json(GraphSummary {
        n_nodes: g.n_nodes(),
        n_edges: g.n_edges(),
        n_attrs: g.n_attrs(),
        directed: g.is_directed(),
        attr_names: g.attr_names().to_vec(),
    }))
}

const PLACEHOLDER: &str = "<!doctype html>\n<html><head><meta charset=\"utf-8\"><title>landmark</title></head>\n<body><h1>landmark map service</h1>\n<p>The explorer assets were not configured. The JSON API lives under <code>/api</code>.</p>\n</body></html>\n";

async fn api_not_found() -> ApiError {
    ApiError {
        status: StatusCode::NOT_FOUND,
        code: "not_found",
        message: "no such endpoint".into(),
    }
}

pub fn router(state: AppState, assets: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/discover", post(discover))
        .route("/graph", get(graph_summary))
        .route("/maps", get(list_maps))
        .route("/maps/{id}", get(get_map))
        .route("/maps/{id}/coords", get(get_coords))
        .route("/maps/{id}/zoom", post(zoom))
        .route("/jobs/{id}", get(get_job))
        .route("/lineage", get(lineage))
        .fallback(api_not_found)
        .with_state(state);
    let app = Router::new().nest("/api", api);
    match assets {
        Some(dir) => app.fallback_service(ServeDir::new(dir)),
        None => app.route("/", get(|| async { Html(PLACEHOLDER) })),
    }
}

pub fn app(config: Config) -> Router {
    router(AppState::new(config.graph, config.defaults), config.assets)
}

pub async fn serve(config: Config, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    info!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, app(config)).await
}
