//! Metadata-to-prompt compilation.
//!
//! A document's prompt is the concatenation, in schema order, of one clause
//! per present feature: `<feature name> is <value>.`. Categorical values are
//! used verbatim. Numerical values are mapped to one of four labels using the
//! 65th and 85th nearest-rank percentiles of that feature over the catalog:
//!
//! | value                 | label    |
//! |-----------------------|----------|
//! | `v == 0`              | `zero`   |
//! | `v > p85`             | `high`   |
//! | `p65 < v <= p85`      | `medium` |
//! | otherwise             | `low`    |
//!
//! The zero case is checked first.

use std::fmt;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::{
    Catalog, CatalogError, Document, Feature, FeatureKind, FeatureSchema, FeatureValue,
};
use crate::scalar::Scalar;
use crate::FeatureThresholds;

/// Context length of the cross-encoder the prompts are sized for.
pub const DEFAULT_TOKEN_BUDGET: usize = 512;

pub const LOW_PERCENTILE: u32 = 65;
pub const HIGH_PERCENTILE: u32 = 85;

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("cannot fit percentiles on an empty column")]
    EmptyColumn,
    #[error("column contains a non-finite value")]
    NonFinite,
    #[error("no thresholds for numerical feature `{0}`")]
    MissingThresholds(String),
    #[error("value for `{0}` does not match its feature kind")]
    KindMismatch(String),
    #[error(transparent)]
    Catalog(#[from] CatalogError),
    #[error("prompt dump line {line}: {message}")]
    Dump { line: usize, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BucketThresholds<T> {
    pub p65: T,
    pub p85: T,
}

impl<T: Scalar> BucketThresholds<T> {
    pub fn new(p65: T, p85: T) -> Self {
        debug_assert!(p65 <= p85);
        Self { p65, p85 }
    }
}

/// Labels for numerical values. Ordering is `zero < low < medium < high`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BucketLabel {
    Zero,
    Low,
    Medium,
    High,
}

impl BucketLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            BucketLabel::Zero => "zero",
            BucketLabel::Low => "low",
            BucketLabel::Medium => "medium",
            BucketLabel::High => "high",
        }
    }
}

impl fmt::Display for BucketLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Nearest-rank percentile of an ascending-sorted, non-empty slice.
pub fn nearest_rank<T: Copy>(sorted: &[T], r: u32) -> T {
    let n = sorted.len();
    // ceil(r * n / 100), at least rank 1
    let rank = (r as usize * n).div_ceil(100).max(1);
    sorted[rank.min(n) - 1]
}

pub fn fit_thresholds<T: Scalar>(column: &[T]) -> Result<BucketThresholds<T>, PromptError> {
    if column.is_empty() {
        return Err(PromptError::EmptyColumn);
    }
    if column.iter().any(|v| !v.is_finite()) {
        return Err(PromptError::NonFinite);
    }
    let mut sorted = column.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite values compare"));
    Ok(BucketThresholds {
        p65: nearest_rank(&sorted, LOW_PERCENTILE),
        p85: nearest_rank(&sorted, HIGH_PERCENTILE),
    })
}

pub fn bucketize<T: Scalar>(value: T, t: &BucketThresholds<T>) -> BucketLabel {
    if value == T::zero() {
        BucketLabel::Zero
    } else if value > t.p85 {
        BucketLabel::High
    } else if value > t.p65 {
        BucketLabel::Medium
    } else {
        BucketLabel::Low
    }
}

/// Renders one feature value; `None` for missing values.
pub fn render_value(
    feature: &Feature,
    value: &FeatureValue,
    thresholds: Option<&BucketThresholds<f64>>,
) -> Result<Option<String>, PromptError> {
    match (feature.kind, value) {
        (_, FeatureValue::Missing) => Ok(None),
        (FeatureKind::Categorical, FeatureValue::Text(t)) if t.is_empty() => Ok(None),
        (FeatureKind::Categorical, FeatureValue::Text(t)) => Ok(Some(t.clone())),
        (FeatureKind::Numerical, FeatureValue::Number(v)) => {
            let t =
                thresholds.ok_or_else(|| PromptError::MissingThresholds(feature.name.clone()))?;
            Ok(Some(bucketize(*v, t).as_str().to_string()))
        }
        _ => Err(PromptError::KindMismatch(feature.name.clone())),
    }
}

/// Conservative token estimate: one token per four characters, rounded up.
pub fn estimate_tokens(text: &str) -> usize {
    text.chars().count().div_ceil(4)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptRecord {
    #[serde(rename = "id")]
    pub doc_id: String,
    pub prompt: String,
    pub est_tokens: usize,
    pub truncated: bool,
}

pub fn compile_prompt(
    doc: &Document,
    schema: &FeatureSchema,
    thresholds: &FeatureThresholds,
    budget: usize,
) -> Result<PromptRecord, PromptError> {
    let mut fragments = Vec::with_capacity(schema.len());
    for feature in schema.features() {
        if let Some(rendered) = render_value(
            feature,
            doc.value(&feature.name),
            thresholds.get(&feature.name),
        )? {
            fragments.push(format!("{} is {}.", feature.name, rendered));
        }
    }

    let mut prompt = fragments.join(" ");
    let mut est_tokens = estimate_tokens(&prompt);
    let mut truncated = false;
    while est_tokens > budget && !fragments.is_empty() {
        fragments.pop();
        truncated = true;
        prompt = fragments.join(" ");
        est_tokens = estimate_tokens(&prompt);
    }
    if truncated {
        tracing::debug!(doc = %doc.id, kept = fragments.len(), "prompt truncated to token budget");
    }

    Ok(PromptRecord {
        doc_id: doc.id.clone(),
        prompt,
        est_tokens,
        truncated,
    })
}

/// Fits thresholds for every numerical feature that has at least one value.
pub fn fit_catalog_thresholds(catalog: &Catalog) -> Result<FeatureThresholds, PromptError> {
    let mut out = FeatureThresholds::new();
    for feature in catalog.schema.features() {
        if feature.kind != FeatureKind::Numerical {
            continue;
        }
        let column = catalog.numeric_column(&feature.name)?;
        if column.is_empty() {
            continue;
        }
        out.insert(feature.name.clone(), fit_thresholds(&column)?);
    }
    Ok(out)
}

pub fn compile_with(
    catalog: &Catalog,
    thresholds: &FeatureThresholds,
    budget: usize,
) -> Result<Vec<PromptRecord>, PromptError> {
    catalog
        .documents
        .iter()
        .map(|doc| compile_prompt(doc, &catalog.schema, thresholds, budget))
        .collect()
}

pub fn compile_all(catalog: &Catalog, budget: usize) -> Result<Vec<PromptRecord>, PromptError> {
    let thresholds = fit_catalog_thresholds(catalog)?;
    compile_with(catalog, &thresholds, budget)
}

pub fn write_prompt_dump(records: &[PromptRecord], writer: impl Write) -> std::io::Result<()> {
    let mut w = BufWriter::new(writer);
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

pub fn read_prompt_dump(reader: impl Read) -> Result<Vec<PromptRecord>, PromptError> {
    let mut out = Vec::new();
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line = line.map_err(|e| PromptError::Dump {
            line: i + 1,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| PromptError::Dump {
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}
