//! Pairwise perception study service.
//!
//! [`Study`] is the session state machine; [`store`] persists it as an
//! append-only log; [`api`] exposes it over HTTP.

pub mod api;
pub mod store;
mod study;

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use atfqoe_core::pairing::{sets_from_catalog, VideoPair};
use serde::{Deserialize, Serialize};

pub use api::{router, AppState, Clock};
pub use study::{
    session_outcome, Study, StudyError, VoteAck, DEFAULT_SESSION_TIMEOUT_MS, MIN_HONEYPOTS_CORRECT, TTC_OUTLIER_FACTOR,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServiceConfig {
    pub listen: SocketAddr,
    pub data_dir: PathBuf,
    pub catalog: PathBuf,
    pub frames_dir: Option<PathBuf>,
    pub session_timeout_ms: u64,
    /// Fixed seed for reproducible sessions; drawn from the clock if unset.
    pub seed: Option<u64>,
    pub snapshot_every: usize,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            listen: SocketAddr::from(([127, 0, 0, 1], 8080)),
            data_dir: PathBuf::from("study-data"),
            catalog: PathBuf::from("catalog.json"),
            frames_dir: None,
            session_timeout_ms: DEFAULT_SESSION_TIMEOUT_MS,
            seed: None,
            snapshot_every: 500,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error("reading catalog {path}: {source}")]
    CatalogIo {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("parsing catalog {path}: {source}")]
    CatalogParse {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("invalid catalog: {0}")]
    Catalog(#[from] atfqoe_core::pairing::PairingError),
    #[error(transparent)]
    Study(#[from] StudyError),
    #[error(transparent)]
    Store(#[from] store::StoreError),
    #[error("binding {addr}: {source}")]
    Bind {
        addr: SocketAddr,
        #[source]
        source: std::io::Error,
    },
    #[error("server: {0}")]
    Serve(std::io::Error),
}

pub fn load_catalog(path: &Path) -> Result<Vec<VideoPair>, ServiceError> {
    let bytes = std::fs::read(path).map_err(|source| ServiceError::CatalogIo { path: path.to_path_buf(), source })?;
    serde_json::from_slice(&bytes).map_err(|source| ServiceError::CatalogParse { path: path.to_path_buf(), source })
}

/// Loads the catalog, restores persisted state and assembles the router
/// state.
pub fn open_state(config: &ServiceConfig, clock: Clock) -> Result<Arc<AppState>, ServiceError> {
    let sets = sets_from_catalog(&load_catalog(&config.catalog)?)?;
    let seed = config.seed.unwrap_or_else(|| clock());
    let (store, snapshot, events) = store::Store::open(&config.data_dir, config.snapshot_every)?;
    let study = Study::new(sets, seed, config.session_timeout_ms)?.with_store(store, snapshot, events)?;
    Ok(Arc::new(AppState { study: Mutex::new(study), clock, frames_dir: config.frames_dir.clone() }))
}

/// Runs the service until Ctrl-C.
pub async fn serve(config: ServiceConfig) -> Result<(), ServiceError> {
    let state = open_state(&config, api::system_clock())?;
    let listener = tokio::net::TcpListener::bind(config.listen)
        .await
        .map_err(|source| ServiceError::Bind { addr: config.listen, source })?;
    tracing::info!(addr = %config.listen, "study service listening");
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(ServiceError::Serve)
}
