use std::sync::atomic::Ordering;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;

use clickseg::embedding::Backend;
use clickseg::tune::{expand_scribble, finetune, TuneOutcome};
use clickseg::{iou, open_session, Annotation, Click, ClickKind, Cloud, Error, MaskDelta, SegmentMask};

use crate::store::{parse_upload, unix_now, AnnotationRecord};
use crate::AppState;

type Shared = Arc<AppState>;

pub struct ApiError(StatusCode, serde_json::Value);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(self.1)).into_response()
    }
}

fn err(status: StatusCode, message: impl std::fmt::Display) -> ApiError {
    ApiError(status, json!({ "error": message.to_string() }))
}

fn internal(e: impl std::fmt::Display) -> ApiError {
    log::error!("{e}");
    err(StatusCode::INTERNAL_SERVER_ERROR, e)
}

/// Errors from a session operation are conflicts with the session state.
fn conflict(e: Error) -> ApiError {
    match e {
        Error::Io { .. } | Error::Json(_) => internal(e),
        _ => err(StatusCode::CONFLICT, e),
    }
}

type ApiResult<T> = Result<T, ApiError>;

pub fn router(state: Shared) -> Router {
    Router::new()
        .route("/healthz", get(|| async { "ok" }))
        .route("/shapes", post(upload))
        .route("/shapes/{id}", get(get_shape))
        .route("/shapes/{id}/annotations", get(annotations))
        .route("/shapes/{id}/labels", get(labels))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}/ops", post(ops))
        .route("/sessions/{id}/mask", get(mask))
        .route("/sessions/{id}/finetune", post(finetune_route))
        .route("/sessions/{id}/commit", post(commit))
        .layer(DefaultBodyLimit::max(256 * 1024 * 1024))
        .with_state(state)
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> ApiResult<T> + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f).await.map_err(internal)?
}

async fn upload(State(st): State<Shared>, body: Bytes) -> ApiResult<(StatusCode, Json<serde_json::Value>)> {
    blocking(move || {
        let cloud = parse_upload(&body).map_err(|e| match e {
            Error::Parse { line, message } => {
                ApiError(StatusCode::UNPROCESSABLE_ENTITY, json!({ "error": format!("line {line}: {message}"), "line": line }))
            }
            other => err(StatusCode::UNPROCESSABLE_ENTITY, other),
        })?;
        if cloud.len() > st.config.max_points {
            return Err(err(
                StatusCode::PAYLOAD_TOO_LARGE,
                format!("{} points exceed the limit of {}", cloud.len(), st.config.max_points),
            ));
        }
        let meta = st.store.put_shape(&body, &cloud).map_err(|e| match e {
            Error::ZeroExtent | Error::EmptyCloud => err(StatusCode::UNPROCESSABLE_ENTITY, e),
            other => internal(other),
        })?;
        Ok((StatusCode::CREATED, Json(json!(meta))))
    })
    .await
}

fn load_shape(st: &AppState, id: &str) -> ApiResult<Cloud> {
    st.store.get_shape(id).map_err(internal)?.ok_or_else(|| err(StatusCode::NOT_FOUND, format!("unknown shape {id}")))
}

async fn get_shape(State(st): State<Shared>, Path(id): Path<String>) -> ApiResult<Response> {
    blocking(move || {
        let cloud = load_shape(&st, &id)?;
        let mut body = Vec::with_capacity(4 + cloud.len() * 24);
        body.extend_from_slice(&(cloud.len() as u32).to_le_bytes());
        for (p, n) in cloud.positions().iter().zip(cloud.normals()) {
            for v in p.iter().chain(n) {
                body.extend_from_slice(&(*v as f32).to_le_bytes());
            }
        }
        Ok((
            [
                (header::CONTENT_TYPE, "application/octet-stream".to_string()),
                (header::HeaderName::from_static("x-shape-id"), id),
                (header::HeaderName::from_static("x-points"), cloud.len().to_string()),
            ],
            body,
        )
            .into_response())
    })
    .await
}

async fn annotations(State(st): State<Shared>, Path(id): Path<String>) -> ApiResult<Json<Vec<AnnotationRecord>>> {
    blocking(move || {
        load_shape(&st, &id)?;
        Ok(Json(st.store.records(&id).map_err(internal)?))
    })
    .await
}

async fn labels(State(st): State<Shared>, Path(id): Path<String>) -> ApiResult<String> {
    blocking(move || {
        let cloud = load_shape(&st, &id)?;
        st.store.export_labels(&id, cloud.len()).map_err(internal)
    })
    .await
}

/// Embeddings of one shape under one backend, shared by its sessions.
pub struct Prepared {
    session: Annotation,
}

pub struct SessionEntry {
    id: String,
    shape_id: String,
    backend: String,
    session: Annotation,
    gt: Option<SegmentMask>,
    clicks: Vec<Click>,
    created: u64,
}

#[derive(Deserialize)]
struct CreateSession {
    shape_id: String,
    #[serde(default = "default_backend")]
    backend: String,
    /// Debug ground truth: indices of the target part.
    gt: Option<Vec<usize>>,
}

fn default_backend() -> String {
    "descriptor".into()
}

fn backend_for(st: &AppState, name: &str) -> ApiResult<Backend<f64>> {
    match name {
        "descriptor" => Ok(Backend::descriptor()),
        "trained" => st
            .trained
            .as_ref()
            .map(|n| Backend::Trained((**n).clone()))
            .ok_or_else(|| err(StatusCode::UNPROCESSABLE_ENTITY, "no trained checkpoint loaded")),
        _ => clickseg::embedding::parse_backend::<f64>(name)
            .ok()
            .filter(|b| matches!(b, Backend::Random { .. }))
            .ok_or_else(|| err(StatusCode::UNPROCESSABLE_ENTITY, format!("unknown backend {name:?}"))),
    }
}

fn prepared(st: &AppState, shape_id: &str, backend: &str) -> ApiResult<Arc<Prepared>> {
    let key = (shape_id.to_string(), backend.to_string());
    if let Some(p) = st.embeddings.lock().expect("embedding cache").get(&key) {
        return Ok(p.clone());
    }
    let cloud = load_shape(st, shape_id)?;
    let b = backend_for(st, backend)?;
    let hp = &st.config.hyper;
    let session = open_session(cloud, &b, hp.alpha, hp.postprocess(true, true)).map_err(internal)?;
    let p = Arc::new(Prepared { session });
    st.embeddings.lock().expect("embedding cache").insert(key, p.clone());
    Ok(p)
}

async fn create_session(State(st): State<Shared>, Json(req): Json<CreateSession>) -> ApiResult<(StatusCode, Json<serde_json::Value>)> {
    blocking(move || {
        let p = prepared(&st, &req.shape_id, &req.backend)?;
        let n = p.session.len();
        let gt = match req.gt {
            Some(ix) => Some(SegmentMask::from_indices(n, &ix).map_err(|e| err(StatusCode::UNPROCESSABLE_ENTITY, e))?),
            None => None,
        };
        let id = format!("s{}", st.next_session.fetch_add(1, Ordering::Relaxed));
        let entry = SessionEntry {
            id: id.clone(),
            shape_id: req.shape_id,
            backend: req.backend,
            session: p.session.clone(),
            gt,
            clicks: Vec::new(),
            created: unix_now(),
        };
        st.sessions.write().expect("session map").insert(id.clone(), Arc::new(tokio::sync::Mutex::new(entry)));
        Ok((StatusCode::CREATED, Json(json!({ "id": id, "points": n }))))
    })
    .await
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "lowercase")]
pub enum OpRequest {
    Add { kind: ClickKind, index: usize },
    Remove { index: usize },
    Scribble { indices: Vec<usize> },
    Undo,
    Finetune { steps: Option<usize> },
}

#[derive(Serialize)]
struct OpReply {
    added: Vec<usize>,
    removed: Vec<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    iou: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    energy: Option<Vec<f64>>,
}

fn apply(st: &AppState, e: &mut SessionEntry, op: OpRequest) -> ApiResult<OpReply> {
    let before = e.session.mask().clone();
    let tune_cfg = st.config.hyper.tune();
    let mut energy = None;
    let tune = |s: &mut Annotation, steps: Option<usize>| -> ApiResult<TuneOutcome> {
        let mut cfg = tune_cfg;
        if let Some(k) = steps {
            cfg.steps = k;
        }
        finetune(s, &cfg).map_err(conflict)
    };
    let mut negatives_added = false;
    match op {
        OpRequest::Add { kind, index } => {
            e.session.add_click(kind, index).map_err(conflict)?;
            e.clicks.push(Click { kind, index });
            negatives_added = kind == ClickKind::Negative;
        }
        OpRequest::Remove { index } => {
            e.session.remove_click(index).map_err(conflict)?;
            e.clicks.retain(|c| c.index != index);
        }
        OpRequest::Scribble { indices } => {
            let known = e.session.clicks().clone();
            expand_scribble(&mut e.session, &indices).map_err(conflict)?;
            for &i in &indices {
                if !known.contains(i) && !e.clicks.iter().any(|c| c.index == i) {
                    e.clicks.push(Click { kind: ClickKind::Negative, index: i });
                    negatives_added = true;
                }
            }
        }
        OpRequest::Undo => {
            let clicks_before = e.session.clicks().clone();
            e.session.undo().map_err(conflict)?;
            let now = e.session.clicks();
            e.clicks.retain(|c| now.contains(c.index));
            for &i in now.positives().iter().chain(now.negatives()) {
                if !clicks_before.contains(i) {
                    let kind = if now.positives().contains(&i) { ClickKind::Positive } else { ClickKind::Negative };
                    e.clicks.push(Click { kind, index: i });
                }
            }
        }
        OpRequest::Finetune { steps } => {
            energy = Some(tune(&mut e.session, steps)?.energy);
        }
    }
    if negatives_added && tune_cfg.auto_on_negative && !e.session.clicks().positives().is_empty() {
        energy = Some(tune(&mut e.session, None)?.energy);
    }
    let delta = MaskDelta::between(&before, e.session.mask());
    let iou = match &e.gt {
        Some(gt) => Some(iou::<f64>(e.session.mask(), gt).map_err(internal)?),
        None => None,
    };
    Ok(OpReply { added: delta.added, removed: delta.removed, iou, energy })
}

fn entry(st: &AppState, id: &str) -> ApiResult<Arc<tokio::sync::Mutex<SessionEntry>>> {
    st.sessions
        .read()
        .expect("session map")
        .get(id)
        .cloned()
        .ok_or_else(|| err(StatusCode::NOT_FOUND, format!("unknown session {id}")))
}

async fn run_op(st: Shared, id: String, op: OpRequest) -> ApiResult<Json<OpReply>> {
    let e = entry(&st, &id)?;
    let mut guard = e.lock_owned().await;
    blocking(move || apply(&st, &mut guard, op).map(Json)).await
}

async fn ops(State(st): State<Shared>, Path(id): Path<String>, Json(op): Json<OpRequest>) -> ApiResult<Json<OpReply>> {
    run_op(st, id, op).await
}

#[derive(Deserialize, Default)]
struct FinetuneBody {
    steps: Option<usize>,
}

async fn finetune_route(State(st): State<Shared>, Path(id): Path<String>, body: Option<Json<FinetuneBody>>) -> ApiResult<Json<OpReply>> {
    let steps = body.map(|b| b.0).unwrap_or_default().steps;
    run_op(st, id, OpRequest::Finetune { steps }).await
}

async fn mask(State(st): State<Shared>, Path(id): Path<String>) -> ApiResult<Json<serde_json::Value>> {
    let e = entry(&st, &id)?;
    let g = e.lock().await;
    let c = g.session.clicks();
    Ok(Json(json!({
        "points": g.session.len(),
        "indices": g.session.mask().indices(),
        "positives": c.positives(),
        "negatives": c.negatives(),
        "clicks": g.clicks,
    })))
}

#[derive(Deserialize)]
struct CommitBody {
    label: String,
}

async fn commit(
    State(st): State<Shared>,
    Path(id): Path<String>,
    Json(body): Json<CommitBody>,
) -> ApiResult<(StatusCode, Json<AnnotationRecord>)> {
    let e = entry(&st, &id)?;
    let mut g = e.lock_owned().await;
    blocking(move || {
        if g.session.mask().none() {
            return Err(err(StatusCode::CONFLICT, "mask is empty"));
        }
        let record = AnnotationRecord {
            id: crate::store::Store::next_record_id(&g.id),
            shape_id: g.shape_id.clone(),
            label: body.label,
            indices: g.session.mask().indices(),
            clicks: g.clicks.clone(),
            backend: g.backend.clone(),
            created: g.created,
            committed: unix_now(),
        };
        st.store.put_record(&record).map_err(internal)?;
        g.session.reset();
        g.clicks.clear();
        g.created = unix_now();
        log::info!("session {} committed record {} on shape {}", g.id, record.id, record.shape_id);
        Ok((StatusCode::CREATED, Json(record)))
    })
    .await
}
