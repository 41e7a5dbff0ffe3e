// SPDX-License-Identifier: Apache-2.0

//! HTTP API over a [`Workbench`]. Bodies are the JSON forms of the core
//! records. Mutating routes require the shared bearer token when one is
//! configured; reads are open.

mod error;
mod routes;

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::sync::atomic::AtomicU64;
use std::sync::Arc;

use axum::Router;
use lodgewright_core::generation::{backend_for_url, Backend};
use lodgewright_core::{Result, Workbench};
use parking_lot::Mutex;
use tokio::net::TcpListener;

pub use error::{ApiError, ErrorBody};
pub use routes::{AnnotationResponse, CatalogUpload, ExperimentState, ExperimentStatus, SplitRequest};

pub const WORKSPACE_ENV: &str = "LODGEWRIGHT_WORKSPACE";
pub const TOKEN_ENV: &str = "LODGEWRIGHT_TOKEN";
pub const BACKEND_URL_ENV: &str = "LODGEWRIGHT_BACKEND_URL";
pub const BACKEND_TOKEN_ENV: &str = "LODGEWRIGHT_BACKEND_TOKEN";

#[derive(Debug, Clone, Default)]
pub struct ServiceConfig {
    /// Bearer token required on mutating routes; `None` leaves them open.
    pub token: Option<String>,
    /// Inference backend for experiments; `None` disables them.
    pub backend_url: Option<String>,
    pub backend_token: Option<String>,
}

impl ServiceConfig {
    pub fn from_env() -> Self {
        let var = |k| std::env::var(k).ok().filter(|v: &String| !v.is_empty());
        Self { token: var(TOKEN_ENV), backend_url: var(BACKEND_URL_ENV), backend_token: var(BACKEND_TOKEN_ENV) }
    }
}

pub struct AppState {
    pub workbench: Arc<Workbench>,
    token: Option<String>,
    backend: Option<Arc<dyn Backend>>,
    experiments: Mutex<BTreeMap<String, ExperimentStatus>>,
    next_experiment: AtomicU64,
}

impl AppState {
    pub fn new(workbench: Workbench, config: ServiceConfig) -> Result<Self> {
        let backend = match config.backend_url {
            Some(url) => Some(Arc::from(backend_for_url(&url, config.backend_token)?)),
            None => None,
        };
        Ok(Self {
            workbench: Arc::new(workbench),
            token: config.token,
            backend,
            experiments: Mutex::new(BTreeMap::new()),
            next_experiment: AtomicU64::new(1),
        })
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    routes::router(state)
}

/// Serves until the process is stopped.
pub async fn serve(listener: TcpListener, state: Arc<AppState>) -> std::io::Result<()> {
    let addr: SocketAddr = listener.local_addr()?;
    tracing::info!(%addr, "serving");
    axum::serve(listener, router(state)).await
}
