//! Bi-encoder and cross-encoder backends.
//!
//! Two backends ship with the crate: a hermetic [`stub`] built from hashed
//! character 3-grams, and a [`remote`] client for a JSON-over-HTTP model
//! server. Scores from different backends are not comparable.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;
use crate::Embedding;

pub mod remote;
pub mod stub;

pub use remote::RemoteBackend;
pub use stub::{stub_embed, StubBackend};

pub const DEFAULT_DIM: usize = 384;
pub const MIN_DIM: usize = 8;

#[derive(Debug, Error)]
pub enum EncoderError {
    #[error("backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("backend returned dimension {got}, expected {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("malformed backend response: {0}")]
    MalformedResponse(String),
    #[error("invalid backend config: {0}")]
    InvalidConfig(String),
    #[error("empty input")]
    EmptyInput,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector<T> {
    pub values: Vec<T>,
    pub model_tag: String,
}

impl<T: Scalar> EmbeddingVector<T> {
    pub fn new(values: Vec<T>, model_tag: impl Into<String>) -> Self {
        Self {
            values,
            model_tag: model_tag.into(),
        }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn norm(&self) -> T {
        self.values
            .iter()
            .fold(T::zero(), |acc, &v| acc + v * v)
            .sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// Relevance of a (query, prompt) pair; higher is more relevant.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct PairScore {
    pub score: f32,
}

pub trait BiEncoder: Send + Sync {
    fn dim(&self) -> usize;
    fn model_tag(&self) -> &str;
    /// One vector per text, in input order.
    fn embed(&self, texts: &[&str]) -> Result<Vec<Embedding>, EncoderError>;
}

pub trait CrossEncoder: Send + Sync {
    fn model_tag(&self) -> &str;
    /// One score per prompt, in input order.
    fn score_pairs(&self, query: &str, prompts: &[&str]) -> Result<Vec<PairScore>, EncoderError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    #[default]
    Stub,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendConfig {
    pub kind: BackendKind,
    pub dim: usize,
    pub endpoint: Option<String>,
    pub timeout_ms: u64,
    /// Largest number of texts sent in one remote call.
    pub max_batch: usize,
    /// Bound on concurrent requests to the remote server.
    pub max_in_flight: usize,
}

impl Default for BackendConfig {
    fn default() -> Self {
        Self {
            kind: BackendKind::Stub,
            dim: DEFAULT_DIM,
            endpoint: None,
            timeout_ms: 30_000,
            max_batch: 64,
            max_in_flight: 8,
        }
    }
}

impl BackendConfig {
    pub fn stub(dim: usize) -> Self {
        Self {
            dim,
            ..Self::default()
        }
    }

    pub fn remote(endpoint: impl Into<String>, dim: usize) -> Self {
        Self {
            kind: BackendKind::Remote,
            dim,
            endpoint: Some(endpoint.into()),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), EncoderError> {
        if self.dim < MIN_DIM {
            return Err(EncoderError::InvalidConfig(format!(
                "dim must be at least {MIN_DIM}, got {}",
                self.dim
            )));
        }
        if self.max_batch == 0 || self.max_in_flight == 0 {
            return Err(EncoderError::InvalidConfig(
                "max_batch and max_in_flight must be at least 1".into(),
            ));
        }
        if self.kind == BackendKind::Remote && self.endpoint.is_none() {
            return Err(EncoderError::InvalidConfig(
                "remote backend requires an endpoint".into(),
            ));
        }
        Ok(())
    }
}

/// The pair of models used by the pipeline.
#[derive(Clone)]
pub struct Backends {
    pub bi: Arc<dyn BiEncoder>,
    pub cross: Arc<dyn CrossEncoder>,
}

impl std::fmt::Debug for Backends {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Backends")
            .field("bi", &self.bi.model_tag())
            .field("cross", &self.cross.model_tag())
            .finish()
    }
}

impl Backends {
    pub fn from_config(cfg: &BackendConfig) -> Result<Self, EncoderError> {
        cfg.validate()?;
        Ok(match cfg.kind {
            BackendKind::Stub => {
                let stub = Arc::new(StubBackend::new(cfg.dim));
                Self {
                    bi: stub.clone(),
                    cross: stub,
                }
            }
            BackendKind::Remote => {
                let remote = Arc::new(RemoteBackend::new(cfg)?);
                Self {
                    bi: remote.clone(),
                    cross: remote,
                }
            }
        })
    }
}

pub fn embed(texts: &[&str], cfg: &BackendConfig) -> Result<Vec<Embedding>, EncoderError> {
    Backends::from_config(cfg)?.bi.embed(texts)
}

pub fn score_pairs(
    query: &str,
    prompts: &[&str],
    cfg: &BackendConfig,
) -> Result<Vec<PairScore>, EncoderError> {
    Backends::from_config(cfg)?
        .cross
        .score_pairs(query, prompts)
}
