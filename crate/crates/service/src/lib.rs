//! HTTP+JSON service for interactive annotation sessions.
//!
//! | method | path | body | reply |
//! |---|---|---|---|
//! | POST | `/shapes` | `.xyzn` or ASCII PLY | `201 {id, points}` |
//! | GET | `/shapes/{id}` | | `u32 N` then `N x 6` little-endian `f32` (position, normal) |
//! | GET | `/shapes/{id}/annotations` | | records |
//! | GET | `/shapes/{id}/labels` | | `.labels` text |
//! | POST | `/sessions` | `{shape_id, backend, gt?}` | `201 {id, points}` |
//! | POST | `/sessions/{id}/ops` | `{op, ...}` | `{added, removed, iou?}` |
//! | GET | `/sessions/{id}/mask` | | `{points, indices, positives, negatives}` |
//! | POST | `/sessions/{id}/finetune` | `{steps?}` | delta plus energies |
//! | POST | `/sessions/{id}/commit` | `{label}` | `201` record |
//! | GET | `/healthz` | | `ok` |

mod api;
pub mod store;

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::atomic::AtomicU64;
use std::sync::{Arc, Mutex, RwLock};

use clickseg::{HyperParams, Net, Result};

pub use api::{router, OpRequest};
pub use store::{AnnotationRecord, ShapeMeta, Store};

#[derive(Clone, Debug)]
pub struct ServiceConfig {
    pub data_dir: PathBuf,
    /// Network served as backend `trained`.
    pub checkpoint: Option<PathBuf>,
    /// Uploads with more points are rejected with 413.
    pub max_points: usize,
    pub hyper: HyperParams,
}

impl ServiceConfig {
    pub fn new(data_dir: PathBuf) -> Self {
        Self { data_dir, checkpoint: None, max_points: 200_000, hyper: HyperParams::default() }
    }
}

pub struct AppState {
    pub config: ServiceConfig,
    pub store: Store,
    trained: Option<Arc<Net>>,
    sessions: RwLock<HashMap<String, Arc<tokio::sync::Mutex<api::SessionEntry>>>>,
    embeddings: Mutex<HashMap<(String, String), Arc<api::Prepared>>>,
    next_session: AtomicU64,
}

impl AppState {
    pub fn new(config: ServiceConfig) -> Result<Self> {
        let store = Store::open(&config.data_dir)?;
        let trained = match &config.checkpoint {
            Some(p) => Some(Arc::new(Net::load(p)?)),
            None => None,
        };
        Ok(Self {
            config,
            store,
            trained,
            sessions: RwLock::new(HashMap::new()),
            embeddings: Mutex::new(HashMap::new()),
            next_session: AtomicU64::new(1),
        })
    }
}

pub async fn serve(config: ServiceConfig, listener: tokio::net::TcpListener) -> std::io::Result<()> {
    let state = Arc::new(AppState::new(config).map_err(std::io::Error::other)?);
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state)).await
}

/// Binds `addr` and serves until the process exits.
pub fn serve_blocking(config: ServiceConfig, addr: SocketAddr) -> std::io::Result<()> {
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr).await?;
        serve(config, listener).await
    })
}
