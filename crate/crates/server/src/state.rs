//! Snapshot generations and the query path.
//!
//! Queries take an `Arc` to the current snapshot and never look at the
//! shared slot again, so a response is always computed from exactly one
//! generation. Refreshes build a complete snapshot off to the side, one at
//! a time, and publish it with a single pointer swap.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};
use std::time::Instant;

use chrono::{DateTime, Utc};
use metarank::encoder::EncoderError;
use metarank::index::IndexError;
use metarank::rerank::{prompt_map, RerankError};
use metarank::{Backends, FeatureThresholds, Pipeline, RerankConfig};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::artifacts::{build_from_files, Build, BuildError, Sources};

pub const MAX_QUERY_CHARS: usize = 2_000;
pub const MAX_TOP_K: usize = 10_000;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("invalid request: {0}")]
    BadRequest(String),
    #[error("no snapshot loaded")]
    NoSnapshot,
    #[error("backend unavailable: {0}")]
    Unavailable(String),
    #[error("internal error: {0}")]
    Internal(String),
    #[error("refresh failed: {0}")]
    Refresh(#[from] BuildError),
    #[error("refresh needs source paths: none given and the snapshot records none")]
    NoSources,
}

impl From<RerankError> for ServiceError {
    fn from(e: RerankError) -> Self {
        match e {
            RerankError::Encoder(EncoderError::BackendUnavailable(m)) => {
                ServiceError::Unavailable(m)
            }
            RerankError::Index(IndexError::EmptyIndex) => ServiceError::NoSnapshot,
            other => ServiceError::Internal(other.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryRequest {
    pub query: String,
    #[serde(default)]
    pub top_k: Option<usize>,
    #[serde(default)]
    pub top_n: Option<usize>,
    /// Opaque caller context (e.g. business rules); accepted and ignored.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub context: Option<serde_json::Value>,
}

impl QueryRequest {
    pub fn new(query: impl Into<String>) -> Self {
        Self {
            query: query.into(),
            top_k: None,
            top_n: None,
            context: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultItem {
    pub doc_id: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub title: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub url: Option<String>,
    pub cross_score: f32,
    pub retrieval_score: f32,
    pub rank: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryResponse {
    pub results: Vec<ResultItem>,
    pub latency_ms: u64,
    pub index_built_at: DateTime<Utc>,
    pub model_tag: String,
    pub generation: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub generation: u64,
    pub docs: usize,
}

#[derive(Debug)]
struct Display {
    title: Option<String>,
    url: Option<String>,
}

/// One immutable build, ready to answer queries.
#[derive(Debug)]
pub struct Snapshot {
    pub generation: u64,
    pub pipeline: Pipeline,
    pub thresholds: FeatureThresholds,
    pub schema_version: String,
    pub built_at: DateTime<Utc>,
    pub model_tag: String,
    pub sources: Option<Sources>,
    display: HashMap<String, Display>,
}

impl Snapshot {
    pub fn docs(&self) -> usize {
        self.pipeline.index.len()
    }
}

pub struct ServiceState {
    current: RwLock<Option<Arc<Snapshot>>>,
    refresh_lock: Mutex<()>,
    generation: AtomicU64,
    backends: Backends,
    rerank: RerankConfig,
    token_budget: usize,
}

impl ServiceState {
    pub fn new(backends: Backends, rerank: RerankConfig, token_budget: usize) -> Self {
        Self {
            current: RwLock::new(None),
            refresh_lock: Mutex::new(()),
            generation: AtomicU64::new(0),
            backends,
            rerank,
            token_budget,
        }
    }

    pub fn backends(&self) -> &Backends {
        &self.backends
    }

    pub fn rerank_config(&self) -> RerankConfig {
        self.rerank
    }

    pub fn snapshot(&self) -> Option<Arc<Snapshot>> {
        self.current
            .read()
            .unwrap_or_else(|e| e.into_inner())
            .clone()
    }

    pub fn generation(&self) -> u64 {
        self.snapshot().map(|s| s.generation).unwrap_or(0)
    }

    pub fn health(&self) -> Health {
        let snap = self.snapshot();
        Health {
            status: "ok".into(),
            generation: snap.as_ref().map(|s| s.generation).unwrap_or(0),
            docs: snap.as_ref().map(|s| s.docs()).unwrap_or(0),
        }
    }

    /// Publishes a build as the next generation.
    pub fn install(&self, build: Build) -> Result<u64, ServiceError> {
        let prompts = Arc::new(prompt_map(&build.records));
        let pipeline = Pipeline::new(
            Arc::new(build.index),
            prompts,
            self.backends.clone(),
            self.rerank,
        )
        .map_err(|e| ServiceError::Internal(e.to_string()))?;
        let display = build
            .catalog
            .documents
            .into_iter()
            .map(|d| {
                (
                    d.id,
                    Display {
                        title: d.title,
                        url: d.url,
                    },
                )
            })
            .collect();

        let mut slot = self.current.write().unwrap_or_else(|e| e.into_inner());
        let generation = self.generation.fetch_add(1, Ordering::SeqCst) + 1;
        *slot = Some(Arc::new(Snapshot {
            generation,
            pipeline,
            thresholds: build.thresholds,
            schema_version: build.manifest.schema_version,
            built_at: build.manifest.built_at,
            model_tag: build.manifest.model_tag,
            sources: build.manifest.sources,
            display,
        }));
        Ok(generation)
    }

    /// Rebuilds from `sources` (or the current snapshot's sources) and swaps
    /// the result in. Blocking; refreshes are serialized. On failure the
    /// current snapshot stays in place.
    pub fn refresh(&self, sources: Option<Sources>) -> Result<u64, ServiceError> {
        let _guard = self.refresh_lock.lock().unwrap_or_else(|e| e.into_inner());
        let sources = sources
            .or_else(|| self.snapshot().and_then(|s| s.sources.clone()))
            .ok_or(ServiceError::NoSources)?;
        let build = build_from_files(&sources, self.backends.bi.as_ref(), self.token_budget)?;
        let generation = self.install(build)?;
        tracing::info!(generation, "refresh complete");
        Ok(generation)
    }

    /// Validates and answers one request. Blocking.
    pub fn handle_query(&self, req: &QueryRequest) -> Result<QueryResponse, ServiceError> {
        let start = Instant::now();
        let query = req.query.trim();
        if query.is_empty() {
            return Err(ServiceError::BadRequest("query must not be empty".into()));
        }
        if req.query.chars().count() > MAX_QUERY_CHARS {
            return Err(ServiceError::BadRequest(format!(
                "query exceeds {MAX_QUERY_CHARS} characters"
            )));
        }
        let top_k = req.top_k.unwrap_or(self.rerank.k);
        // an explicit top_n must fit; the default shrinks to fit a small top_k
        let top_n = req.top_n.unwrap_or(self.rerank.top_n.min(top_k));
        if !(1 <= top_n && top_n <= top_k && top_k <= MAX_TOP_K) {
            return Err(ServiceError::BadRequest(format!(
                "need 1 <= top_n ({top_n}) <= top_k ({top_k}) <= {MAX_TOP_K}"
            )));
        }

        let snap = self.snapshot().ok_or(ServiceError::NoSnapshot)?;
        let cfg = RerankConfig {
            batch_size: self.rerank.batch_size.min(top_k),
            top_n,
            k: top_k,
        };
        let ranked = snap.pipeline.run_with(query, &cfg)?;
        let results = ranked
            .into_iter()
            .map(|r| {
                let d = snap.display.get(&r.doc_id);
                ResultItem {
                    title: d.and_then(|d| d.title.clone()),
                    url: d.and_then(|d| d.url.clone()),
                    doc_id: r.doc_id,
                    cross_score: r.cross_score,
                    retrieval_score: r.retrieval_score,
                    rank: r.rank,
                }
            })
            .collect();
        Ok(QueryResponse {
            results,
            latency_ms: start.elapsed().as_millis() as u64,
            index_built_at: snap.built_at,
            model_tag: snap.model_tag.clone(),
            generation: snap.generation,
        })
    }
}
