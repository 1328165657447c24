//! Evaluation harness: latency sweeps over the cross-encoder batch size,
//! annotator-score bucketing, and the one-stage vs two-stage ablation.

pub mod ablation;
pub mod annotation;
pub mod bench;
pub mod stats;
pub mod synthetic;

pub use ablation::{ablation, AblationReport, AblationRow};
pub use annotation::{
    annotator_bias, bucketize_query, table2_summary, AnnotationRecord, BiasReport, RelevanceBucket,
    Table2Counts,
};
pub use bench::{bench, summarize_samples, LatencyRow, LatencySample};
pub use stats::Summary;
