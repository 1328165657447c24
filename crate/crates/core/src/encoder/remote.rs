//! Blocking JSON-over-HTTP client for an external model server.
//!
//! Wire contract:
//!
//! ```text
//! POST {endpoint}/embed  {"texts": [...]}                -> {"dim": D, "vectors": [[...], ...]}
//! POST {endpoint}/score  {"query": "...", "texts": [...]} -> {"scores": [...]}
//! ```
//!
//! Any non-200 status or transport failure is reported as
//! [`EncoderError::BackendUnavailable`].

use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::{BackendConfig, BiEncoder, CrossEncoder, EmbeddingVector, EncoderError, PairScore};
use crate::Embedding;

#[derive(Debug, Serialize, Deserialize)]
pub struct EmbedRequest {
    pub texts: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct EmbedResponse {
    pub dim: usize,
    pub vectors: Vec<Vec<f32>>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ScoreRequest {
    pub query: String,
    pub texts: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ScoreResponse {
    pub scores: Vec<f32>,
}

/// Counting semaphore bounding in-flight requests.
#[derive(Debug)]
struct InFlight {
    free: Mutex<usize>,
    cv: Condvar,
}

struct Permit<'a>(&'a InFlight);

impl InFlight {
    fn new(limit: usize) -> Self {
        Self {
            free: Mutex::new(limit),
            cv: Condvar::new(),
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut free = self.free.lock().unwrap_or_else(|e| e.into_inner());
        while *free == 0 {
            free = self.cv.wait(free).unwrap_or_else(|e| e.into_inner());
        }
        *free -= 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().unwrap_or_else(|e| e.into_inner()) += 1;
        self.0.cv.notify_one();
    }
}

pub struct RemoteBackend {
    endpoint: String,
    dim: usize,
    max_batch: usize,
    model_tag: String,
    agent: ureq::Agent,
    in_flight: InFlight,
}

impl std::fmt::Debug for RemoteBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RemoteBackend")
            .field("endpoint", &self.endpoint)
            .field("dim", &self.dim)
            .finish()
    }
}

impl RemoteBackend {
    pub fn new(cfg: &BackendConfig) -> Result<Self, EncoderError> {
        cfg.validate()?;
        let endpoint = cfg
            .endpoint
            .clone()
            .ok_or_else(|| {
                EncoderError::InvalidConfig("remote backend requires an endpoint".into())
            })?
            .trim_end_matches('/')
            .to_string();
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_millis(cfg.timeout_ms)))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(Self {
            model_tag: format!("remote:{endpoint}"),
            endpoint,
            dim: cfg.dim,
            max_batch: cfg.max_batch,
            agent,
            in_flight: InFlight::new(cfg.max_in_flight),
        })
    }

    fn post<B: Serialize, R: DeserializeOwned>(
        &self,
        route: &str,
        body: &B,
    ) -> Result<R, EncoderError> {
        let url = format!("{}/{route}", self.endpoint);
        let _permit = self.in_flight.acquire();
        let mut resp = self
            .agent
            .post(&url)
            .send_json(body)
            .map_err(|e| EncoderError::BackendUnavailable(format!("{url}: {e}")))?;
        let status = resp.status();
        if status != 200 {
            return Err(EncoderError::BackendUnavailable(format!(
                "{url}: status {status}"
            )));
        }
        resp.body_mut()
            .read_json::<R>()
            .map_err(|e| EncoderError::MalformedResponse(format!("{url}: {e}")))
    }
}

impl BiEncoder for RemoteBackend {
    fn dim(&self) -> usize {
        self.dim
    }

    fn model_tag(&self) -> &str {
        &self.model_tag
    }

    fn embed(&self, texts: &[&str]) -> Result<Vec<Embedding>, EncoderError> {
        if texts.is_empty() {
            return Err(EncoderError::EmptyInput);
        }
        let mut out = Vec::with_capacity(texts.len());
        for chunk in texts.chunks(self.max_batch) {
            let req = EmbedRequest {
                texts: chunk.iter().map(|t| t.to_string()).collect(),
            };
            let resp: EmbedResponse = self.post("embed", &req)?;
            if resp.dim != self.dim {
                return Err(EncoderError::DimensionMismatch {
                    expected: self.dim,
                    got: resp.dim,
                });
            }
            if resp.vectors.len() != chunk.len() {
                return Err(EncoderError::MalformedResponse(format!(
                    "sent {} texts, got {} vectors",
                    chunk.len(),
                    resp.vectors.len()
                )));
            }
            for v in resp.vectors {
                if v.len() != self.dim {
                    return Err(EncoderError::DimensionMismatch {
                        expected: self.dim,
                        got: v.len(),
                    });
                }
                let e = EmbeddingVector::new(v, self.model_tag.clone());
                if !e.is_finite() {
                    return Err(EncoderError::MalformedResponse("non-finite vector".into()));
                }
                out.push(e);
            }
        }
        Ok(out)
    }
}

impl CrossEncoder for RemoteBackend {
    fn model_tag(&self) -> &str {
        &self.model_tag
    }

    fn score_pairs(&self, query: &str, prompts: &[&str]) -> Result<Vec<PairScore>, EncoderError> {
        if prompts.is_empty() {
            return Err(EncoderError::EmptyInput);
        }
        let mut out = Vec::with_capacity(prompts.len());
        for chunk in prompts.chunks(self.max_batch) {
            let req = ScoreRequest {
                query: query.to_string(),
                texts: chunk.iter().map(|t| t.to_string()).collect(),
            };
            let resp: ScoreResponse = self.post("score", &req)?;
            if resp.scores.len() != chunk.len() {
                return Err(EncoderError::MalformedResponse(format!(
                    "sent {} pairs, got {} scores",
                    chunk.len(),
                    resp.scores.len()
                )));
            }
            if resp.scores.iter().any(|s| !s.is_finite()) {
                return Err(EncoderError::MalformedResponse("non-finite score".into()));
            }
            out.extend(resp.scores.into_iter().map(|score| PairScore { score }));
        }
        Ok(out)
    }
}
