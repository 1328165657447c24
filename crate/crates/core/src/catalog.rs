//! Feature schema, document model and JSON/JSONL ingestion.

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CatalogError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error{}: {message}", line_suffix(*.line))]
    Parse {
        line: Option<usize>,
        message: String,
    },
    #[error("invalid schema: {0}")]
    Schema(String),
    #[error("invalid document at line {line}: {message}")]
    Validation { line: usize, message: String },
    #[error("unknown feature `{0}`")]
    UnknownFeature(String),
    #[error("feature `{feature}` is {actual:?}, expected {expected:?}")]
    KindMismatch {
        feature: String,
        expected: FeatureKind,
        actual: FeatureKind,
    },
}

fn line_suffix(line: Option<usize>) -> String {
    line.map(|l| format!(" at line {l}")).unwrap_or_default()
}

pub type Result<T, E = CatalogError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    Categorical,
    Numerical,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Feature {
    pub name: String,
    pub kind: FeatureKind,
}

impl Feature {
    pub fn new(name: impl Into<String>, kind: FeatureKind) -> Self {
        Self {
            name: name.into(),
            kind,
        }
    }
}

/// Ordered feature list. The order fixes the order of fragments in every
/// compiled prompt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FeatureSchema {
    pub version: String,
    features: Vec<Feature>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSchema {
    version: String,
    features: Vec<Feature>,
}

impl FeatureSchema {
    pub fn new(version: impl Into<String>, features: Vec<Feature>) -> Result<Self> {
        if features.is_empty() {
            return Err(CatalogError::Schema("schema has no features".into()));
        }
        let mut seen = HashSet::new();
        for f in &features {
            if f.name.trim().is_empty() {
                return Err(CatalogError::Schema("empty feature name".into()));
            }
            if !seen.insert(f.name.as_str()) {
                return Err(CatalogError::Schema(format!(
                    "duplicate feature name `{}`",
                    f.name
                )));
            }
        }
        Ok(Self {
            version: version.into(),
            features,
        })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: RawSchema = serde_json::from_str(text).map_err(|e| {
            // Unknown `kind` strings surface as serde "unknown variant" errors;
            // they are schema violations rather than malformed JSON.
            if e.classify() == serde_json::error::Category::Data
                && e.to_string().contains("unknown variant")
            {
                CatalogError::Schema(e.to_string())
            } else {
                CatalogError::Parse {
                    line: None,
                    message: e.to_string(),
                }
            }
        })?;
        Self::new(raw.version, raw.features)
    }

    pub fn features(&self) -> &[Feature] {
        &self.features
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.features.iter().position(|f| f.name == name)
    }

    pub fn feature(&self, name: &str) -> Option<&Feature> {
        self.features.iter().find(|f| f.name == name)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("schema serializes")
    }
}

pub fn load_schema(path: impl AsRef<Path>) -> Result<FeatureSchema> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| CatalogError::Io {
        path: path.display().to_string(),
        source,
    })?;
    FeatureSchema::from_json(&text)
}

#[derive(Debug, Clone, PartialEq)]
pub enum FeatureValue {
    Text(String),
    Number(f64),
    Missing,
}

impl FeatureValue {
    pub fn is_missing(&self) -> bool {
        matches!(self, FeatureValue::Missing)
    }

    pub fn as_number(&self) -> Option<f64> {
        match self {
            FeatureValue::Number(v) => Some(*v),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Document {
    pub id: String,
    /// One entry per schema feature, `Missing` when absent.
    pub values: BTreeMap<String, FeatureValue>,
    pub title: Option<String>,
    pub url: Option<String>,
}

impl Document {
    pub fn value(&self, feature: &str) -> &FeatureValue {
        self.values.get(feature).unwrap_or(&FeatureValue::Missing)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Catalog {
    pub schema: FeatureSchema,
    pub documents: Vec<Document>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDocument {
    id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    title: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    url: Option<String>,
    #[serde(default)]
    features: serde_json::Map<String, serde_json::Value>,
}

impl Catalog {
    /// Builds a catalog from documents, checking id uniqueness and that every
    /// document only carries schema features.
    pub fn new(schema: FeatureSchema, documents: Vec<Document>) -> Result<Self> {
        let mut ids = HashSet::new();
        let mut normalized = Vec::with_capacity(documents.len());
        for (i, mut doc) in documents.into_iter().enumerate() {
            let line = i + 1;
            if doc.id.is_empty() {
                return Err(CatalogError::Validation {
                    line,
                    message: "empty document id".into(),
                });
            }
            if !ids.insert(doc.id.clone()) {
                return Err(CatalogError::Validation {
                    line,
                    message: format!("duplicate id `{}`", doc.id),
                });
            }
            for (name, value) in &doc.values {
                let feature = schema
                    .feature(name)
                    .ok_or_else(|| CatalogError::Validation {
                        line,
                        message: format!("feature `{name}` is not in the schema"),
                    })?;
                check_value(feature, value)
                    .map_err(|message| CatalogError::Validation { line, message })?;
            }
            for f in schema.features() {
                let v = doc
                    .values
                    .entry(f.name.clone())
                    .or_insert(FeatureValue::Missing);
                if matches!(v, FeatureValue::Text(t) if t.is_empty()) {
                    *v = FeatureValue::Missing;
                }
            }
            normalized.push(doc);
        }
        Ok(Self {
            schema,
            documents: normalized,
        })
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Document> {
        self.documents.iter().find(|d| d.id == id)
    }

    /// All non-missing values of a numerical feature, in document order.
    pub fn numeric_column(&self, feature: &str) -> Result<Vec<f64>> {
        let f = self
            .schema
            .feature(feature)
            .ok_or_else(|| CatalogError::UnknownFeature(feature.to_string()))?;
        if f.kind != FeatureKind::Numerical {
            return Err(CatalogError::KindMismatch {
                feature: feature.to_string(),
                expected: FeatureKind::Numerical,
                actual: f.kind,
            });
        }
        Ok(self
            .documents
            .iter()
            .filter_map(|d| d.value(feature).as_number())
            .collect())
    }

    pub fn read_jsonl(schema: FeatureSchema, reader: impl Read) -> Result<Self> {
        let reader = BufReader::new(reader);
        let mut docs = Vec::new();
        let mut ids = HashSet::new();
        for (i, line) in reader.lines().enumerate() {
            let lineno = i + 1;
            let line = line.map_err(|e| CatalogError::Parse {
                line: Some(lineno),
                message: e.to_string(),
            })?;
            if line.trim().is_empty() {
                continue;
            }
            let raw: RawDocument =
                serde_json::from_str(&line).map_err(|e| CatalogError::Parse {
                    line: Some(lineno),
                    message: e.to_string(),
                })?;
            let doc = parse_document(&schema, raw).map_err(|message| CatalogError::Validation {
                line: lineno,
                message,
            })?;
            if !ids.insert(doc.id.clone()) {
                return Err(CatalogError::Validation {
                    line: lineno,
                    message: format!("duplicate id `{}`", doc.id),
                });
            }
            docs.push(doc);
        }
        Ok(Self {
            schema,
            documents: docs,
        })
    }

    /// Writes the catalog back as JSONL. Missing values are omitted.
    pub fn write_jsonl(&self, writer: impl Write) -> std::io::Result<()> {
        let mut w = BufWriter::new(writer);
        for doc in &self.documents {
            let mut features = serde_json::Map::new();
            for f in self.schema.features() {
                match doc.value(&f.name) {
                    FeatureValue::Text(t) => {
                        features.insert(f.name.clone(), serde_json::Value::String(t.clone()));
                    }
                    FeatureValue::Number(v) => {
                        let n =
                            serde_json::Number::from_f64(*v).expect("catalog numbers are finite");
                        features.insert(f.name.clone(), serde_json::Value::Number(n));
                    }
                    FeatureValue::Missing => {}
                }
            }
            let raw = RawDocument {
                id: doc.id.clone(),
                title: doc.title.clone(),
                url: doc.url.clone(),
                features,
            };
            serde_json::to_writer(&mut w, &raw)?;
            w.write_all(b"\n")?;
        }
        w.flush()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let io_err = |source| CatalogError::Io {
            path: path.display().to_string(),
            source,
        };
        let file = File::create(path).map_err(io_err)?;
        self.write_jsonl(file).map_err(io_err)
    }
}

pub fn load_catalog(schema: FeatureSchema, path: impl AsRef<Path>) -> Result<Catalog> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| CatalogError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Catalog::read_jsonl(schema, file)
}

fn parse_document(schema: &FeatureSchema, raw: RawDocument) -> Result<Document, String> {
    if raw.id.is_empty() {
        return Err("empty document id".into());
    }
    let mut values = BTreeMap::new();
    for (name, json) in raw.features {
        let feature = schema
            .feature(&name)
            .ok_or_else(|| format!("feature `{name}` is not in the schema"))?;
        let value = match (feature.kind, json) {
            (_, serde_json::Value::Null) => FeatureValue::Missing,
            (FeatureKind::Categorical, serde_json::Value::String(s)) if s.is_empty() => {
                FeatureValue::Missing
            }
            (FeatureKind::Categorical, serde_json::Value::String(s)) => FeatureValue::Text(s),
            (FeatureKind::Numerical, serde_json::Value::Number(n)) => {
                let v = n
                    .as_f64()
                    .ok_or_else(|| format!("`{name}`: number out of range"))?;
                FeatureValue::Number(v)
            }
            (FeatureKind::Numerical, serde_json::Value::String(s)) => {
                return Err(match s.trim().parse::<f64>() {
                    Ok(v) if !v.is_finite() => format!("`{name}`: non-finite number `{s}`"),
                    _ => format!("`{name}`: expected a number, got string `{s}`"),
                });
            }
            (kind, other) => {
                return Err(format!(
                    "`{name}`: value {other} does not match kind {kind:?}"
                ));
            }
        };
        check_value(feature, &value)?;
        values.insert(name, value);
    }
    for f in schema.features() {
        values
            .entry(f.name.clone())
            .or_insert(FeatureValue::Missing);
    }
    Ok(Document {
        id: raw.id,
        values,
        title: raw.title,
        url: raw.url,
    })
}

fn check_value(feature: &Feature, value: &FeatureValue) -> Result<(), String> {
    match (feature.kind, value) {
        (_, FeatureValue::Missing) => Ok(()),
        (FeatureKind::Categorical, FeatureValue::Text(_)) => Ok(()),
        (FeatureKind::Numerical, FeatureValue::Number(v)) if v.is_finite() => Ok(()),
        (FeatureKind::Numerical, FeatureValue::Number(v)) => {
            Err(format!("`{}`: non-finite number {v}", feature.name))
        }
        (kind, v) => Err(format!(
            "`{}`: value {v:?} does not match kind {kind:?}",
            feature.name
        )),
    }
}
