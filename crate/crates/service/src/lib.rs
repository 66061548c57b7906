//! HTTP service exposing trained reduced-order models and the LVAD pump
//! panels as JSON endpoints.
//!
//! The model registry is load-once: an id, once bound, always refers to the
//! same immutable model, so evaluation needs only a read lock for the time
//! it takes to clone an `Arc`.

mod api;
mod error;
mod openapi;

pub use api::{EvaluateRequest, FieldResponse, FieldStats, LoadRequest, ParameterInput};
pub use error::ApiError;

use axum::extract::DefaultBodyLimit;
use axum::Router;
use podi_core::pipeline::{load_model, PipelineError, RomModel};
use podi_core::pump::PumpCurve;
use std::collections::BTreeMap;
use std::future::Future;
use std::net::{IpAddr, Ipv4Addr, SocketAddr};
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};
use tokio::net::TcpListener;

/// File extension of models picked up from the model directory.
pub const MODEL_EXTENSION: &str = "podi";

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub bind: IpAddr,
    pub port: u16,
    /// Models found here are loaded at startup; relative path references in
    /// `POST /models` resolve against it.
    pub model_dir: Option<PathBuf>,
    /// Request body limit in bytes.
    pub max_payload: usize,
    pub pump: PumpCurve,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            bind: IpAddr::V4(Ipv4Addr::LOCALHOST),
            port: 8080,
            model_dir: None,
            max_payload: 64 * 1024 * 1024,
            pump: PumpCurve::HEARTMATE3,
        }
    }
}

impl ServiceConfig {
    pub fn socket_addr(&self) -> SocketAddr {
        SocketAddr::new(self.bind, self.port)
    }
}

#[derive(Debug, Default)]
pub struct Registry {
    models: RwLock<BTreeMap<String, Arc<RomModel>>>,
}

impl Registry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Binds `id` to `model`. Returns the model back if the id is taken.
    #[allow(clippy::result_large_err)]
    pub fn insert(&self, id: String, model: RomModel) -> Result<Arc<RomModel>, RomModel> {
        let mut models = self.models.write().unwrap_or_else(|e| e.into_inner());
        if models.contains_key(&id) {
            return Err(model);
        }
        let model = Arc::new(model);
        models.insert(id, Arc::clone(&model));
        Ok(model)
    }

    pub fn get(&self, id: &str) -> Option<Arc<RomModel>> {
        self.models.read().unwrap_or_else(|e| e.into_inner()).get(id).cloned()
    }

    pub fn ids(&self) -> Vec<String> {
        self.models
            .read()
            .unwrap_or_else(|e| e.into_inner())
            .keys()
            .cloned()
            .collect()
    }

    pub fn len(&self) -> usize {
        self.models.read().unwrap_or_else(|e| e.into_inner()).len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug)]
pub struct AppState {
    pub config: ServiceConfig,
    pub registry: Registry,
}

impl AppState {
    pub fn new(config: ServiceConfig) -> Self {
        Self {
            config,
            registry: Registry::new(),
        }
    }
}

/// Accepted model ids: 1 to 128 characters from `[A-Za-z0-9._-]`.
pub fn valid_model_id(id: &str) -> bool {
    !id.is_empty() && id.len() <= 128 && id.bytes().all(|b| b.is_ascii_alphanumeric() || b"._-".contains(&b))
}

/// Loads every `*.podi` file of `dir` under its file stem, in name order.
pub fn load_model_dir(registry: &Registry, dir: &Path) -> Result<Vec<String>, PipelineError> {
    let io_err = |source| PipelineError::Io {
        path: dir.display().to_string(),
        source,
    };
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(io_err)?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == MODEL_EXTENSION))
        .collect();
    paths.sort();
    let mut loaded = Vec::new();
    for path in paths {
        let Some(id) = path.file_stem().and_then(|s| s.to_str()).filter(|s| valid_model_id(s)) else {
            tracing::warn!(path = %path.display(), "skipping model with unusable file name");
            continue;
        };
        let model = load_model(&path)?;
        if registry.insert(id.to_string(), model).is_ok() {
            tracing::info!(id, path = %path.display(), "model loaded");
            loaded.push(id.to_string());
        }
    }
    Ok(loaded)
}

pub fn router(state: Arc<AppState>) -> Router {
    let limit = state.config.max_payload;
    api::routes()
        .layer(axum::middleware::from_fn(api::require_json_accept))
        .layer(DefaultBodyLimit::max(limit))
        .with_state(state)
}

/// Serves on an already bound listener until `shutdown` resolves.
pub async fn serve<F>(listener: TcpListener, state: Arc<AppState>, shutdown: F) -> std::io::Result<()>
where
    F: Future<Output = ()> + Send + 'static,
{
    axum::serve(listener, router(state))
        .with_graceful_shutdown(shutdown)
        .await
}

/// Builds the state from `config`, loads the model directory and serves
/// until Ctrl-C.
pub async fn run(config: ServiceConfig) -> std::io::Result<()> {
    let state = Arc::new(AppState::new(config));
    if let Some(dir) = &state.config.model_dir {
        load_model_dir(&state.registry, dir).map_err(std::io::Error::other)?;
    }
    let listener = TcpListener::bind(state.config.socket_addr()).await?;
    tracing::info!(addr = %listener.local_addr()?, models = state.registry.len(), "listening");
    serve(listener, state, async {
        let _ = tokio::signal::ctrl_c().await;
    })
    .await
}
