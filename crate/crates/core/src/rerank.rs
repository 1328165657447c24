//! Stage two: cross-encoder re-ranking of the stage-one shortlist, and the
//! end-to-end [`Pipeline`].

use std::cmp::Ordering;
use std::collections::HashMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::encoder::{Backends, CrossEncoder, EncoderError};
use crate::index::{Candidate, EmbeddingIndex, IndexError};
use crate::promptc::{estimate_tokens, PromptRecord, DEFAULT_TOKEN_BUDGET};

/// Document id → compiled prompt.
pub type PromptMap = HashMap<String, String>;

pub fn prompt_map(records: &[PromptRecord]) -> PromptMap {
    records
        .iter()
        .map(|r| (r.doc_id.clone(), r.prompt.clone()))
        .collect()
}

#[derive(Debug, Error)]
pub enum RerankError {
    #[error("no prompt for candidate `{0}`")]
    MissingPrompt(String),
    #[error("no candidates to re-rank")]
    EmptyCandidates,
    #[error("invalid rerank config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error(transparent)]
    Index(#[from] IndexError),
}

pub type Result<T, E = RerankError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RerankConfig {
    /// Pairs per cross-encoder call.
    pub batch_size: usize,
    pub top_n: usize,
    /// Stage-one shortlist size.
    pub k: usize,
}

impl Default for RerankConfig {
    fn default() -> Self {
        Self {
            batch_size: 4,
            top_n: 5,
            k: 100,
        }
    }
}

impl RerankConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.top_n == 0 || self.k == 0 {
            return Err(RerankError::InvalidConfig(
                "batch_size, top_n and k must be at least 1".into(),
            ));
        }
        if self.top_n > self.k {
            return Err(RerankError::InvalidConfig(format!(
                "top_n {} exceeds k {}",
                self.top_n, self.k
            )));
        }
        if self.batch_size > self.k {
            return Err(RerankError::InvalidConfig(format!(
                "batch_size {} exceeds k {}",
                self.batch_size, self.k
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedResult {
    pub doc_id: String,
    pub cross_score: f32,
    pub retrieval_score: f32,
    pub rank: usize,
}

pub fn make_pairs<'a>(
    query: &'a str,
    candidates: &[Candidate],
    prompts: &'a PromptMap,
) -> Result<Vec<(&'a str, &'a str)>> {
    candidates
        .iter()
        .map(|c| {
            prompts
                .get(&c.doc_id)
                .map(|p| (query, p.as_str()))
                .ok_or_else(|| RerankError::MissingPrompt(c.doc_id.clone()))
        })
        .collect()
}

fn by_cross_score(a: &RankedResult, b: &RankedResult) -> Ordering {
    b.cross_score
        .total_cmp(&a.cross_score)
        .then_with(|| a.doc_id.cmp(&b.doc_id))
}

/// Scores every candidate in batches of `cfg.batch_size` and keeps the best
/// `cfg.top_n` by cross-encoder score.
pub fn rerank(
    query: &str,
    candidates: &[Candidate],
    prompts: &PromptMap,
    cfg: &RerankConfig,
    cross: &dyn CrossEncoder,
) -> Result<Vec<RankedResult>> {
    if cfg.batch_size == 0 || cfg.top_n == 0 {
        return Err(RerankError::InvalidConfig(
            "batch_size and top_n must be at least 1".into(),
        ));
    }
    if candidates.is_empty() {
        return Err(RerankError::EmptyCandidates);
    }
    let pairs = make_pairs(query, candidates, prompts)?;
    let query_tokens = estimate_tokens(query);
    for ((_, prompt), c) in pairs.iter().zip(candidates) {
        if query_tokens + estimate_tokens(prompt) > DEFAULT_TOKEN_BUDGET {
            tracing::warn!(doc = %c.doc_id, "query + prompt exceeds the cross-encoder context");
        }
    }

    let mut scores = Vec::with_capacity(pairs.len());
    for batch in pairs.chunks(cfg.batch_size) {
        let texts: Vec<&str> = batch.iter().map(|(_, p)| *p).collect();
        let got = cross.score_pairs(query, &texts)?;
        if got.len() != texts.len() {
            return Err(EncoderError::MalformedResponse(format!(
                "scored {} of {} pairs",
                got.len(),
                texts.len()
            ))
            .into());
        }
        scores.extend(got);
    }

    let mut results: Vec<RankedResult> = candidates
        .iter()
        .zip(scores)
        .map(|(c, s)| RankedResult {
            doc_id: c.doc_id.clone(),
            cross_score: s.score,
            retrieval_score: c.retrieval_score,
            rank: 0,
        })
        .collect();
    results.sort_by(by_cross_score);
    results.truncate(cfg.top_n);
    for (i, r) in results.iter_mut().enumerate() {
        r.rank = i + 1;
    }
    Ok(results)
}

/// One build's index and prompts together with the models that query them.
#[derive(Debug, Clone)]
pub struct Pipeline {
    pub index: Arc<EmbeddingIndex>,
    pub prompts: Arc<PromptMap>,
    pub backends: Backends,
    pub config: RerankConfig,
}

impl Pipeline {
    pub fn new(
        index: Arc<EmbeddingIndex>,
        prompts: Arc<PromptMap>,
        backends: Backends,
        config: RerankConfig,
    ) -> Result<Self> {
        config.validate()?;
        if let Some(id) = index.ids().iter().find(|id| !prompts.contains_key(*id)) {
            return Err(RerankError::MissingPrompt(id.clone()));
        }
        if backends.bi.dim() != index.dim() {
            return Err(IndexError::DimensionMismatch {
                expected: index.dim(),
                got: backends.bi.dim(),
            }
            .into());
        }
        Ok(Self {
            index,
            prompts,
            backends,
            config,
        })
    }

    /// Stage one only: embed the query and take the top `k` by cosine.
    pub fn retrieve(&self, query: &str, k: usize) -> Result<Vec<Candidate>> {
        if self.index.is_empty() {
            return Err(IndexError::EmptyIndex.into());
        }
        let q = self
            .backends
            .bi
            .embed(&[query])?
            .pop()
            .ok_or_else(|| EncoderError::MalformedResponse("no query vector".into()))?;
        Ok(self.index.top_k(&q.values, k)?)
    }

    pub fn run(&self, query: &str) -> Result<Vec<RankedResult>> {
        self.run_with(query, &self.config)
    }

    pub fn run_with(&self, query: &str, cfg: &RerankConfig) -> Result<Vec<RankedResult>> {
        let candidates = self.retrieve(query, cfg.k)?;
        rerank(
            query,
            &candidates,
            &self.prompts,
            cfg,
            self.backends.cross.as_ref(),
        )
    }
}

pub fn run_pipeline(
    query: &str,
    index: &EmbeddingIndex,
    prompts: &PromptMap,
    cfg: &RerankConfig,
    backends: &Backends,
) -> Result<Vec<RankedResult>> {
    if index.is_empty() {
        return Err(IndexError::EmptyIndex.into());
    }
    let q = backends
        .bi
        .embed(&[query])?
        .pop()
        .ok_or_else(|| EncoderError::MalformedResponse("no query vector".into()))?;
    let candidates = index.top_k(&q.values, cfg.k)?;
    rerank(query, &candidates, prompts, cfg, backends.cross.as_ref())
}
