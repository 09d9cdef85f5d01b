//! HTTP facade over the corner-case engine.
//!
//! Reads work on a snapshot of the store; inserts and corrections are
//! serialized through one writer, persisted, and only then published.

mod error;
pub mod mock;
mod routes;

use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};

use axum::extract::DefaultBodyLimit;
use axum::routing::{get, post};
use axum::Router;
use cornerrag_core::augmentation::Generator;
use cornerrag_core::embedding::{EmbeddingGateway, ProjectionHead};
use cornerrag_core::retrieval::DEFAULT_ALPHA;
use cornerrag_core::store::{StorePair, CROSSMODAL_FILE};
use serde::Serialize;

pub use error::{ApiError, ApiResult, ErrorBody};
pub use routes::{CasePage, CorrectionRequest, CorrectionResponse, Health, InsertResponse, QueryResponse};

/// Subdirectory of the database directory holding case images.
pub const IMAGES_DIR: &str = "images";

/// Content-addressed location of a PNG inside the database directory.
pub fn image_ref(png: &[u8]) -> String {
    format!("{IMAGES_DIR}/{}", routes::content_name(png))
}

/// Service URLs shown by `/health`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct Endpoints {
    pub text_encoder: Option<String>,
    pub multimodal_encoder: Option<String>,
    pub generator: Option<String>,
}

#[derive(Debug, Clone)]
pub struct ServerConfig {
    /// Holds the database files and stored case images.
    pub db_dir: PathBuf,
    /// Where composites are written; served under `/composites`.
    pub scratch_dir: PathBuf,
    pub alpha_default: f64,
    pub endpoints: Endpoints,
}

impl ServerConfig {
    pub fn new(db_dir: impl Into<PathBuf>) -> Self {
        let db_dir = db_dir.into();
        Self {
            scratch_dir: db_dir.join("scratch"),
            db_dir,
            alpha_default: DEFAULT_ALPHA,
            endpoints: Endpoints::default(),
        }
    }
}

pub struct AppState {
    store: RwLock<Arc<StorePair>>,
    writer: tokio::sync::Mutex<()>,
    pub gateway: EmbeddingGateway,
    pub head: Option<ProjectionHead>,
    pub generator: Arc<dyn Generator>,
    pub config: ServerConfig,
}

impl AppState {
    pub fn new(
        store: StorePair,
        gateway: EmbeddingGateway,
        head: Option<ProjectionHead>,
        generator: Arc<dyn Generator>,
        config: ServerConfig,
    ) -> Self {
        Self {
            store: RwLock::new(Arc::new(store)),
            writer: tokio::sync::Mutex::new(()),
            gateway,
            head,
            generator,
            config,
        }
    }

    /// Loads the store from `config.db_dir`, or starts empty with the
    /// gateway's dimensions when no database exists yet.
    pub fn open(
        gateway: EmbeddingGateway,
        head: Option<ProjectionHead>,
        generator: Arc<dyn Generator>,
        config: ServerConfig,
    ) -> cornerrag_core::Result<Self> {
        let store = load_or_empty(&config.db_dir, &gateway)?;
        Ok(Self::new(store, gateway, head, generator, config))
    }

    /// The current published store.
    pub fn snapshot(&self) -> Arc<StorePair> {
        self.store.read().unwrap_or_else(|e| e.into_inner()).clone()
    }

    fn publish(&self, store: StorePair) {
        *self.store.write().unwrap_or_else(|e| e.into_inner()) = Arc::new(store);
    }
}

fn load_or_empty(dir: &Path, gateway: &EmbeddingGateway) -> cornerrag_core::Result<StorePair> {
    if dir.join(CROSSMODAL_FILE).exists() {
        StorePair::load(dir)
    } else {
        Ok(StorePair::new(gateway.dims()))
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/query", post(routes::query))
        .route("/cases", post(routes::insert_case).get(routes::list_cases))
        .route("/cases/{index}", get(routes::get_case))
        .route("/cases/{index}/correct", post(routes::correct_case))
        .route("/composites/{name}", get(routes::composite))
        .route("/health", get(routes::health))
        .layer(DefaultBodyLimit::max(32 * 1024 * 1024))
        .with_state(state)
}

/// Serves until the listener fails.
pub async fn serve(listener: tokio::net::TcpListener, state: Arc<AppState>) -> std::io::Result<()> {
    tracing::info!(addr = ?listener.local_addr().ok(), "listening");
    axum::serve(listener, router(state)).await
}
