//! Offline build output: everything one snapshot needs, in one directory.
//!
//! ```text
//! <dir>/index.msxe      embedding cache
//! <dir>/prompts.jsonl   compiled prompts
//! <dir>/schema.json     feature schema
//! <dir>/catalog.jsonl   normalized catalog (display metadata)
//! <dir>/manifest.json   build metadata
//! ```

use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use metarank::catalog::{load_catalog, load_schema, Catalog, CatalogError, FeatureSchema};
use metarank::encoder::BiEncoder;
use metarank::index::{build_index, load_index, save_index, IndexError};
use metarank::promptc::{self, PromptError, PromptRecord};
use metarank::{EmbeddingIndex, FeatureThresholds};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const INDEX_FILE: &str = "index.msxe";
pub const PROMPTS_FILE: &str = "prompts.jsonl";
pub const SCHEMA_FILE: &str = "schema.json";
pub const CATALOG_FILE: &str = "catalog.jsonl";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Error)]
pub enum BuildError {
    #[error(transparent)]
    Catalog(#[from] CatalogError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error("catalog is empty")]
    EmptyCatalog,
    #[error("{path}: {message}")]
    Artifact { path: PathBuf, message: String },
}

/// Where a build's inputs came from; refresh re-reads these.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sources {
    pub schema: PathBuf,
    pub catalog: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub model_tag: String,
    pub built_at: DateTime<Utc>,
    pub dim: usize,
    pub docs: usize,
    pub schema_version: String,
    pub token_budget: usize,
    pub truncated_prompts: usize,
    pub thresholds: FeatureThresholds,
    pub sources: Option<Sources>,
}

/// Result of compiling a catalog and embedding its prompts.
#[derive(Debug, Clone)]
pub struct Build {
    pub catalog: Catalog,
    pub thresholds: FeatureThresholds,
    pub records: Vec<PromptRecord>,
    pub index: EmbeddingIndex,
    pub manifest: Manifest,
}

pub fn build_from_catalog(
    catalog: Catalog,
    encoder: &dyn BiEncoder,
    token_budget: usize,
    sources: Option<Sources>,
) -> Result<Build, BuildError> {
    if catalog.is_empty() {
        return Err(BuildError::EmptyCatalog);
    }
    let thresholds = promptc::fit_catalog_thresholds(&catalog)?;
    let records = promptc::compile_with(&catalog, &thresholds, token_budget)?;
    let index = build_index(&records, encoder)?;
    let manifest = Manifest {
        model_tag: index.model_tag.clone(),
        built_at: index.built_at.unwrap_or_else(Utc::now),
        dim: index.dim(),
        docs: index.len(),
        schema_version: catalog.schema.version.clone(),
        token_budget,
        truncated_prompts: records.iter().filter(|r| r.truncated).count(),
        thresholds: thresholds.clone(),
        sources,
    };
    Ok(Build {
        catalog,
        thresholds,
        records,
        index,
        manifest,
    })
}

pub fn build_from_files(
    sources: &Sources,
    encoder: &dyn BiEncoder,
    token_budget: usize,
) -> Result<Build, BuildError> {
    let schema = load_schema(&sources.schema)?;
    let catalog = load_catalog(schema, &sources.catalog)?;
    let sources = Sources {
        schema: absolute(&sources.schema),
        catalog: absolute(&sources.catalog),
    };
    build_from_catalog(catalog, encoder, token_budget, Some(sources))
}

fn absolute(p: &Path) -> PathBuf {
    std::fs::canonicalize(p).unwrap_or_else(|_| p.to_path_buf())
}

fn artifact_err(path: &Path, e: impl std::fmt::Display) -> BuildError {
    BuildError::Artifact {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

/// Writes `bytes` next to `path` and renames it into place.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), BuildError> {
    let tmp = path.with_extension("partial");
    let mut f = File::create(&tmp).map_err(|e| artifact_err(&tmp, e))?;
    f.write_all(bytes).map_err(|e| artifact_err(&tmp, e))?;
    f.sync_all().map_err(|e| artifact_err(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| artifact_err(path, e))
}

pub fn write_artifacts(build: &Build, dir: &Path) -> Result<(), BuildError> {
    std::fs::create_dir_all(dir).map_err(|e| artifact_err(dir, e))?;

    save_index(&build.index, dir.join(INDEX_FILE))?;

    let mut prompts = Vec::new();
    promptc::write_prompt_dump(&build.records, &mut prompts).map_err(|e| artifact_err(dir, e))?;
    write_atomic(&dir.join(PROMPTS_FILE), &prompts)?;

    write_atomic(
        &dir.join(SCHEMA_FILE),
        build.catalog.schema.to_json().as_bytes(),
    )?;

    let mut catalog = Vec::new();
    build
        .catalog
        .write_jsonl(&mut catalog)
        .map_err(|e| artifact_err(dir, e))?;
    write_atomic(&dir.join(CATALOG_FILE), &catalog)?;

    let manifest = serde_json::to_vec_pretty(&build.manifest).map_err(|e| artifact_err(dir, e))?;
    // manifest last: its presence marks a complete build
    write_atomic(&dir.join(MANIFEST_FILE), &manifest)
}

pub fn read_artifacts(dir: &Path) -> Result<Build, BuildError> {
    let manifest_path = dir.join(MANIFEST_FILE);
    let text =
        std::fs::read_to_string(&manifest_path).map_err(|e| artifact_err(&manifest_path, e))?;
    let manifest: Manifest =
        serde_json::from_str(&text).map_err(|e| artifact_err(&manifest_path, e))?;

    let schema: FeatureSchema = load_schema(dir.join(SCHEMA_FILE))?;
    let catalog = load_catalog(schema, dir.join(CATALOG_FILE))?;

    let prompts_path = dir.join(PROMPTS_FILE);
    let file = File::open(&prompts_path).map_err(|e| artifact_err(&prompts_path, e))?;
    let records = promptc::read_prompt_dump(file)?;

    let mut index = load_index(dir.join(INDEX_FILE))?;
    index.model_tag = manifest.model_tag.clone();
    index.built_at = Some(manifest.built_at);

    if index.len() != manifest.docs || index.dim() != manifest.dim {
        return Err(artifact_err(
            dir,
            format!(
                "index holds {} × {} but manifest says {} × {}",
                index.len(),
                index.dim(),
                manifest.docs,
                manifest.dim
            ),
        ));
    }
    if records.len() != index.len() || catalog.len() != index.len() {
        return Err(artifact_err(
            dir,
            "prompt, catalog and index sizes disagree",
        ));
    }

    Ok(Build {
        catalog,
        thresholds: manifest.thresholds.clone(),
        records,
        index,
        manifest,
    })
}

#[cfg(test)]
mod tests {
    use metarank::encoder::StubBackend;
    use metarank::evalkit::synthetic::collateral_catalog;

    use super::*;

    #[test]
    fn round_trip_through_directory() {
        let dir = tempfile::tempdir().unwrap();
        let stub = StubBackend::new(32);
        let build = build_from_catalog(collateral_catalog(40, 3), &stub, 512, None).unwrap();
        write_artifacts(&build, dir.path()).unwrap();
        let back = read_artifacts(dir.path()).unwrap();
        assert_eq!(back.index, build.index);
        assert_eq!(back.records, build.records);
        assert_eq!(back.catalog, build.catalog);
        assert_eq!(back.manifest, build.manifest);
        assert_eq!(back.thresholds, build.thresholds);
    }

    #[test]
    fn missing_manifest_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            read_artifacts(dir.path()),
            Err(BuildError::Artifact { .. })
        ));
    }
}
