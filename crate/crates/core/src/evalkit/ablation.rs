//! One-stage (bi-encoder only) vs two-stage comparison.

use thiserror::Error;

use crate::rerank::{Pipeline, RerankError};

#[derive(Debug, Error)]
pub enum AblationError {
    #[error("no ablation queries")]
    NoQueries,
    #[error("query `{query}` failed: {source}")]
    Query {
        query: String,
        #[source]
        source: RerankError,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AblationRow {
    pub query: String,
    /// Judged-relevant documents in the bi-encoder top-N.
    pub stage_one: usize,
    /// Judged-relevant documents in the re-ranked top-N.
    pub two_stage: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationReport {
    pub top_n: usize,
    pub rows: Vec<AblationRow>,
    /// Fraction of queries where the two-stage count is at least the
    /// one-stage count.
    pub fraction: f64,
}

impl AblationReport {
    pub fn render_markdown(&self) -> String {
        let mut out = format!(
            "| query | 1-stage relevant@{n} | 2-stage relevant@{n} |\n|---|---|---|\n",
            n = self.top_n
        );
        for r in &self.rows {
            out.push_str(&format!(
                "| {} | {} | {} |\n",
                r.query, r.stage_one, r.two_stage
            ));
        }
        out.push_str(&format!(
            "\n2-stage ≥ 1-stage on {:.0}% of queries\n",
            self.fraction * 100.0
        ));
        out
    }
}

/// `judge(doc_id, query)` decides whether a returned document is relevant.
pub fn ablation<F>(
    queries: &[String],
    judge: F,
    pipeline: &Pipeline,
) -> Result<AblationReport, AblationError>
where
    F: Fn(&str, &str) -> bool,
{
    if queries.is_empty() {
        return Err(AblationError::NoQueries);
    }
    let top_n = pipeline.config.top_n;
    let mut rows = Vec::with_capacity(queries.len());
    for q in queries {
        let wrap = |source| AblationError::Query {
            query: q.clone(),
            source,
        };
        let stage_one = pipeline.retrieve(q, top_n).map_err(wrap)?;
        let full = pipeline.run(q).map_err(wrap)?;
        rows.push(AblationRow {
            query: q.clone(),
            stage_one: stage_one.iter().filter(|c| judge(&c.doc_id, q)).count(),
            two_stage: full.iter().filter(|r| judge(&r.doc_id, q)).count(),
        });
    }
    let wins = rows.iter().filter(|r| r.two_stage >= r.stage_one).count();
    Ok(AblationReport {
        top_n,
        fraction: wins as f64 / rows.len() as f64,
        rows,
    })
}
