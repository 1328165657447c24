//! Two-stage semantic retrieval over document metadata.
//!
//! Documents carry no content, only a fixed set of categorical and numerical
//! features. Each document is compiled into a short English prompt
//! ([`promptc`]), the prompts are embedded offline by a bi-encoder and cached
//! in a flat [`index`], and queries are answered by exact cosine top-K
//! retrieval followed by cross-encoder re-ranking ([`rerank`]).
//! [`evalkit`] holds the latency and relevance evaluation harness.
//!
//! The numeric kernels (cosine similarity, percentile thresholds, summary
//! statistics) are generic over [`Scalar`]; the aliases below fix the scalar
//! types the rest of the pipeline runs on.

pub mod catalog;
pub mod encoder;
pub mod evalkit;
pub mod index;
pub mod promptc;
pub mod rerank;
pub mod scalar;

pub use catalog::{Catalog, Document, Feature, FeatureKind, FeatureSchema, FeatureValue};
pub use encoder::{BackendConfig, BackendKind, Backends, BiEncoder, CrossEncoder, PairScore};
pub use index::{Candidate, EmbeddingIndex};
pub use promptc::{BucketLabel, PromptRecord};
pub use rerank::{Pipeline, RankedResult, RerankConfig};
pub use scalar::Scalar;

/// Embedding vectors as stored in the index file (32-bit floats).
pub type Embedding = encoder::EmbeddingVector<f32>;

/// Percentile thresholds for numerical catalog features.
pub type Thresholds = promptc::BucketThresholds<f64>;

/// Per-feature thresholds fitted over a whole catalog.
pub type FeatureThresholds = std::collections::BTreeMap<String, Thresholds>;

/// Latency report with timings in seconds.
pub type LatencyReport = evalkit::bench::LatencyReport<f64>;
