//! Flat embedding cache and exact cosine top-K retrieval.
//!
//! File layout (all integers little-endian):
//!
//! ```text
//! "MSXE"            4 bytes magic
//! version   u32     = 1
//! dim       u32
//! count     u64
//! count × { id_len u32, id bytes (UTF-8), dim × f32 }
//! count     u64     trailer, must equal the header count
//! ```

use std::cmp::Ordering;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::encoder::{BiEncoder, EncoderError};
use crate::promptc::PromptRecord;
use crate::scalar::Scalar;

pub const MAGIC: &[u8; 4] = b"MSXE";
pub const FORMAT_VERSION: u32 = 1;

/// Texts embedded per bi-encoder call while building.
const BUILD_CHUNK: usize = 256;

#[derive(Debug, Error)]
pub enum IndexError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("zero vector has no direction")]
    ZeroVector,
    #[error("index is empty")]
    EmptyIndex,
    #[error("K must be at least 1")]
    InvalidK,
    #[error("duplicate document id `{0}`")]
    DuplicateId(String),
    #[error("non-finite value in vector for `{0}`")]
    NonFinite(String),
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad index file: {0}")]
    Format(String),
}

pub type Result<T, E = IndexError> = std::result::Result<T, E>;

fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

fn norm<T: Scalar>(a: &[T]) -> T {
    dot(a, a).sqrt()
}

/// `a·b / (‖a‖‖b‖)`.
pub fn cosine<T: Scalar>(a: &[T], b: &[T]) -> Result<T> {
    if a.len() != b.len() {
        return Err(IndexError::DimensionMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    let (na, nb) = (norm(a), norm(b));
    if na == T::zero() || nb == T::zero() {
        return Err(IndexError::ZeroVector);
    }
    Ok(dot(a, b) / (na * nb))
}

/// A stage-one hit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub doc_id: String,
    pub retrieval_score: f32,
}

/// Immutable embedding cache, entries sorted by document id.
#[derive(Debug, Clone)]
pub struct EmbeddingIndex {
    dim: usize,
    ids: Vec<String>,
    vectors: Vec<f32>,
    norms: Vec<f32>,
    pub model_tag: String,
    pub built_at: Option<DateTime<Utc>>,
}

/// Compares dimension, ids and vector bits; metadata is ignored.
impl PartialEq for EmbeddingIndex {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim
            && self.ids == other.ids
            && self.vectors.len() == other.vectors.len()
            && self
                .vectors
                .iter()
                .zip(&other.vectors)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

impl EmbeddingIndex {
    pub fn from_entries(
        dim: usize,
        mut entries: Vec<(String, Vec<f32>)>,
        model_tag: impl Into<String>,
    ) -> Result<Self> {
        entries.sort_by(|a, b| a.0.cmp(&b.0));
        if let Some(w) = entries.windows(2).find(|w| w[0].0 == w[1].0) {
            return Err(IndexError::DuplicateId(w[0].0.clone()));
        }
        let mut ids = Vec::with_capacity(entries.len());
        let mut vectors = Vec::with_capacity(entries.len() * dim);
        let mut norms = Vec::with_capacity(entries.len());
        for (id, v) in entries {
            if v.len() != dim {
                return Err(IndexError::DimensionMismatch {
                    expected: dim,
                    got: v.len(),
                });
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(IndexError::NonFinite(id));
            }
            let n = norm(&v);
            if n == 0.0 {
                return Err(IndexError::ZeroVector);
            }
            norms.push(n);
            vectors.extend_from_slice(&v);
            ids.push(id);
        }
        Ok(Self {
            dim,
            ids,
            vectors,
            norms,
            model_tag: model_tag.into(),
            built_at: None,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn vector(&self, i: usize) -> &[f32] {
        &self.vectors[i * self.dim..(i + 1) * self.dim]
    }

    pub fn get(&self, id: &str) -> Option<&[f32]> {
        self.ids
            .binary_search_by(|probe| probe.as_str().cmp(id))
            .ok()
            .map(|i| self.vector(i))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f32])> {
        self.ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.as_str(), self.vector(i)))
    }

    /// Exact top-K by cosine similarity, sorted by score descending then id
    /// ascending.
    pub fn top_k(&self, query: &[f32], k: usize) -> Result<Vec<Candidate>> {
        if k == 0 {
            return Err(IndexError::InvalidK);
        }
        if self.is_empty() {
            return Err(IndexError::EmptyIndex);
        }
        if query.len() != self.dim {
            return Err(IndexError::DimensionMismatch {
                expected: self.dim,
                got: query.len(),
            });
        }
        let qn = norm(query);
        if qn == 0.0 {
            return Err(IndexError::ZeroVector);
        }

        let mut scored: Vec<(f32, usize)> = (0..self.len())
            .map(|i| (dot(query, self.vector(i)) / (qn * self.norms[i]), i))
            .collect();
        // ids are sorted, so position order is id order
        let order = |a: &(f32, usize), b: &(f32, usize)| -> Ordering {
            b.0.total_cmp(&a.0).then(a.1.cmp(&b.1))
        };
        if k < scored.len() {
            scored.select_nth_unstable_by(k - 1, order);
            scored.truncate(k);
        }
        scored.sort_unstable_by(order);
        Ok(scored
            .into_iter()
            .map(|(score, i)| Candidate {
                doc_id: self.ids[i].clone(),
                retrieval_score: score,
            })
            .collect())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let id_bytes: usize = self.ids.iter().map(|s| s.len() + 4).sum();
        let mut out = Vec::with_capacity(24 + id_bytes + self.vectors.len() * 4);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        out.extend_from_slice(&(self.len() as u64).to_le_bytes());
        for (id, v) in self.iter() {
            out.extend_from_slice(&(id.len() as u32).to_le_bytes());
            out.extend_from_slice(id.as_bytes());
            for x in v {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        out.extend_from_slice(&(self.len() as u64).to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(IndexError::Format("bad magic".into()));
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(IndexError::Format(format!(
                "unsupported version {version} (expected {FORMAT_VERSION})"
            )));
        }
        let dim = r.u32()? as usize;
        if dim == 0 {
            return Err(IndexError::Format("dimension 0".into()));
        }
        let count = r.u64()?;
        // every entry takes at least 4 + 4·dim bytes
        let min_entry = 4 + 4 * dim as u64;
        if count.saturating_mul(min_entry) > r.remaining() as u64 {
            return Err(IndexError::Format(format!(
                "truncated: header announces {count} entries"
            )));
        }
        let mut ids = Vec::with_capacity(count as usize);
        let mut vectors = Vec::with_capacity(count as usize * dim);
        let mut norms = Vec::with_capacity(count as usize);
        for _ in 0..count {
            let len = r.u32()? as usize;
            let id = std::str::from_utf8(r.take(len)?)
                .map_err(|_| IndexError::Format("id is not UTF-8".into()))?
                .to_string();
            if let Some(prev) = ids.last() {
                if *prev >= id {
                    return Err(IndexError::Format(format!(
                        "ids not strictly ascending at `{id}`"
                    )));
                }
            }
            let start = vectors.len();
            for chunk in r.take(4 * dim)?.chunks_exact(4) {
                let x = f32::from_le_bytes(chunk.try_into().expect("4-byte chunk"));
                vectors.push(x);
            }
            let v = &vectors[start..];
            if v.iter().any(|x| !x.is_finite()) {
                return Err(IndexError::Format(format!("non-finite value for `{id}`")));
            }
            let n = norm(v);
            if n == 0.0 {
                return Err(IndexError::Format(format!("zero vector for `{id}`")));
            }
            norms.push(n);
            ids.push(id);
        }
        let trailer = r.u64()?;
        if trailer != count {
            return Err(IndexError::Format(format!(
                "integrity check failed: trailer {trailer} != header {count}"
            )));
        }
        if r.remaining() != 0 {
            return Err(IndexError::Format(format!(
                "{} trailing bytes",
                r.remaining()
            )));
        }
        Ok(Self {
            dim,
            ids,
            vectors,
            norms,
            model_tag: String::new(),
            built_at: None,
        })
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.remaining() < n {
            return Err(IndexError::Format(format!(
                "truncated at byte {} (needed {n} more)",
                self.pos
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(
            self.take(4)?.try_into().expect("4 bytes"),
        ))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }
}

/// Embeds every prompt with the bi-encoder.
pub fn build_index(records: &[PromptRecord], encoder: &dyn BiEncoder) -> Result<EmbeddingIndex> {
    if records.is_empty() {
        return Err(IndexError::EmptyIndex);
    }
    let mut sorted: Vec<&PromptRecord> = records.iter().collect();
    sorted.sort_by(|a, b| a.doc_id.cmp(&b.doc_id));
    if let Some(w) = sorted.windows(2).find(|w| w[0].doc_id == w[1].doc_id) {
        return Err(IndexError::DuplicateId(w[0].doc_id.clone()));
    }
    let dim = encoder.dim();
    let mut entries = Vec::with_capacity(sorted.len());
    for chunk in sorted.chunks(BUILD_CHUNK) {
        let texts: Vec<&str> = chunk.iter().map(|r| r.prompt.as_str()).collect();
        let vectors = encoder.embed(&texts)?;
        if vectors.len() != chunk.len() {
            return Err(EncoderError::MalformedResponse(format!(
                "embedded {} texts, got {} vectors",
                chunk.len(),
                vectors.len()
            ))
            .into());
        }
        for (rec, v) in chunk.iter().zip(vectors) {
            entries.push((rec.doc_id.clone(), v.values));
        }
    }
    let mut index = EmbeddingIndex::from_entries(dim, entries, encoder.model_tag())?;
    index.built_at = Some(Utc::now());
    Ok(index)
}

/// Writes the index through a temporary file and renames it into place.
pub fn save_index(index: &EmbeddingIndex, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let tmp = path.with_extension("tmp");
    {
        let mut w = BufWriter::new(File::create(&tmp)?);
        w.write_all(&index.to_bytes())?;
        w.into_inner().map_err(|e| e.into_error())?.sync_all()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load_index(path: impl AsRef<Path>) -> Result<EmbeddingIndex> {
    let bytes = std::fs::read(path)?;
    EmbeddingIndex::from_bytes(&bytes)
}
