//! Latency sweep over the cross-encoder batch size.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::time::Instant;

use thiserror::Error;

use super::stats;
use crate::rerank::{Pipeline, RerankConfig, RerankError};
use crate::scalar::Scalar;

/// Batch sizes swept by default.
pub const BATCH_GRID: [usize; 7] = [1, 2, 4, 8, 16, 32, 64];

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("no queries to benchmark")]
    NoQueries,
    #[error("no batch sizes given")]
    NoBatchSizes,
    #[error("batch size must be at least 1")]
    ZeroBatch,
    #[error("query {query_id} at b={batch_size} failed: {source}")]
    Query {
        query_id: usize,
        batch_size: usize,
        #[source]
        source: RerankError,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatencySample {
    pub query_id: usize,
    pub batch_size: usize,
    /// Seconds, strictly positive.
    pub wall_time: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatencyRow<T> {
    pub batch_size: usize,
    pub mean: T,
    pub std: T,
    pub median: T,
    pub count: usize,
}

/// One machine/config line of the batch-size table.
#[derive(Debug, Clone, PartialEq)]
pub struct LatencyReport<T> {
    pub label: String,
    pub rows: Vec<LatencyRow<T>>,
}

/// Groups samples by batch size (ascending) and summarizes each group.
pub fn summarize_samples(label: &str, samples: &[LatencySample]) -> LatencyReport<f64> {
    let mut cells: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for s in samples {
        cells.entry(s.batch_size).or_default().push(s.wall_time);
    }
    let rows = cells
        .into_iter()
        .filter_map(|(b, times)| {
            let s = stats::summarize(&times)?;
            Some(LatencyRow {
                batch_size: b,
                mean: s.mean,
                std: s.std,
                median: s.median,
                count: s.count,
            })
        })
        .collect();
    LatencyReport {
        label: label.to_string(),
        rows,
    }
}

/// Runs every query at every batch size, sequentially, timing each full
/// pipeline call (query embedding, top-K, re-ranking).
pub fn bench(
    label: &str,
    queries: &[String],
    batch_sizes: &[usize],
    pipeline: &Pipeline,
) -> Result<(LatencyReport<f64>, Vec<LatencySample>), BenchError> {
    if queries.is_empty() {
        return Err(BenchError::NoQueries);
    }
    if batch_sizes.is_empty() {
        return Err(BenchError::NoBatchSizes);
    }
    if batch_sizes.contains(&0) {
        return Err(BenchError::ZeroBatch);
    }
    let mut samples = Vec::with_capacity(queries.len() * batch_sizes.len());
    for &b in batch_sizes {
        let cfg = RerankConfig {
            batch_size: b,
            ..pipeline.config
        };
        for (query_id, q) in queries.iter().enumerate() {
            let start = Instant::now();
            pipeline
                .run_with(q, &cfg)
                .map_err(|source| BenchError::Query {
                    query_id,
                    batch_size: b,
                    source,
                })?;
            let wall_time = start.elapsed().as_secs_f64().max(f64::MIN_POSITIVE);
            samples.push(LatencySample {
                query_id,
                batch_size: b,
                wall_time,
            });
        }
    }
    Ok((summarize_samples(label, &samples), samples))
}

fn batch_columns<T>(reports: &[LatencyReport<T>]) -> Vec<usize> {
    let mut cols: Vec<usize> = reports
        .iter()
        .flat_map(|r| r.rows.iter().map(|row| row.batch_size))
        .collect();
    cols.sort_unstable();
    cols.dedup();
    cols
}

/// Markdown table: one row per report with `mean ± std` cells (seconds),
/// followed by a median table.
pub fn render_markdown<T: Scalar>(reports: &[LatencyReport<T>]) -> String {
    let cols = batch_columns(reports);
    let mut out = String::new();
    for (title, cell) in [("mean ± std (s)", 0usize), ("median (s)", 1usize)] {
        let _ = write!(out, "| {title} |");
        for b in &cols {
            let _ = write!(out, " b={b} |");
        }
        out.push('\n');
        out.push_str("|---|");
        for _ in &cols {
            out.push_str("---|");
        }
        out.push('\n');
        for r in reports {
            let _ = write!(out, "| {} |", r.label);
            for b in &cols {
                match r.rows.iter().find(|row| row.batch_size == *b) {
                    Some(row) if cell == 0 => {
                        let _ = write!(out, " {:.4} ± {:.4} |", row.mean, row.std);
                    }
                    Some(row) => {
                        let _ = write!(out, " {:.4} |", row.median);
                    }
                    None => out.push_str(" - |"),
                }
            }
            out.push('\n');
        }
        out.push('\n');
    }
    out
}

/// CSV with one line per (label, statistic) and one column per batch size.
pub fn render_csv<T: Scalar>(reports: &[LatencyReport<T>]) -> String {
    let cols = batch_columns(reports);
    let mut out = String::from("label,stat");
    for b in &cols {
        let _ = write!(out, ",b={b}");
    }
    out.push('\n');
    for r in reports {
        for stat in ["mean", "std", "median", "count"] {
            let _ = write!(out, "{},{stat}", r.label);
            for b in &cols {
                match r.rows.iter().find(|row| row.batch_size == *b) {
                    Some(row) => {
                        let _ = match stat {
                            "mean" => write!(out, ",{}", row.mean),
                            "std" => write!(out, ",{}", row.std),
                            "median" => write!(out, ",{}", row.median),
                            _ => write!(out, ",{}", row.count),
                        };
                    }
                    None => out.push(','),
                }
            }
            out.push('\n');
        }
    }
    out
}
