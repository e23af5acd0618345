//! On-disk layout of an index directory.
//!
//! ```text
//! manifest.json      format version, chunking parameters, extractor, counts
//! entities.jsonl     one Entity per line, ascending id
//! relations.jsonl    one Relation per line, ascending id
//! chunks.jsonl       one Chunk per line, ascending id
//! ```
//!
//! Embedding sidecars written by the retrieval layer live alongside.

use std::collections::BTreeSet;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::GraphKb;

pub const FORMAT_VERSION: u32 = 1;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const ENTITIES_FILE: &str = "entities.jsonl";
pub const RELATIONS_FILE: &str = "relations.jsonl";
pub const CHUNKS_FILE: &str = "chunks.jsonl";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{file}: {source}")]
    Io {
        file: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{file}: corrupt store at line {line}: {reason}")]
    Corrupt {
        file: PathBuf,
        line: usize,
        reason: String,
    },
    #[error("{file}: format version {found} does not match supported version {expected}")]
    VersionMismatch {
        file: PathBuf,
        found: u32,
        expected: u32,
    },
}

impl StoreError {
    pub fn file(&self) -> &Path {
        match self {
            StoreError::Io { file, .. }
            | StoreError::Corrupt { file, .. }
            | StoreError::VersionMismatch { file, .. } => file,
        }
    }

    pub(crate) fn io(file: &Path, source: std::io::Error) -> Self {
        StoreError::Io {
            file: file.to_path_buf(),
            source,
        }
    }

    pub(crate) fn corrupt(file: &Path, line: usize, reason: impl Into<String>) -> Self {
        StoreError::Corrupt {
            file: file.to_path_buf(),
            line,
            reason: reason.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChunkingParams {
    pub chunk_size_units: usize,
    pub overlap_units: usize,
    pub unit: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoreCounts {
    pub documents: usize,
    pub chunks: usize,
    pub entities: usize,
    pub relations: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexManifest {
    pub format_version: u32,
    pub chunking: Option<ChunkingParams>,
    pub extractor: String,
    pub embedder: Option<String>,
    pub description_cap: usize,
    pub counts: StoreCounts,
}

impl IndexManifest {
    pub fn for_kb(kb: &GraphKb) -> Self {
        let documents: BTreeSet<&str> = kb.chunks().iter().map(|c| c.doc_id.as_str()).collect();
        IndexManifest {
            format_version: FORMAT_VERSION,
            chunking: None,
            extractor: "none".into(),
            embedder: None,
            description_cap: kb.description_cap(),
            counts: StoreCounts {
                documents: documents.len(),
                chunks: kb.chunks().len(),
                entities: kb.entities().len(),
                relations: kb.relations().len(),
            },
        }
    }
}

impl ChunkingParams {
    pub fn words(chunk_size_units: usize, overlap_units: usize) -> Self {
        Self {
            chunk_size_units,
            overlap_units,
            unit: "word".into(),
        }
    }
}

fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), StoreError> {
    let file = fs::File::create(path).map_err(|e| StoreError::io(path, e))?;
    let mut out = BufWriter::new(file);
    for row in rows {
        let line = serde_json::to_string(row).expect("store records serialize");
        out.write_all(line.as_bytes())
            .and_then(|_| out.write_all(b"\n"))
            .map_err(|e| StoreError::io(path, e))?;
    }
    out.flush().map_err(|e| StoreError::io(path, e))
}

fn read_jsonl<T: DeserializeOwned>(path: &Path, expected: usize) -> Result<Vec<T>, StoreError> {
    let text = fs::read_to_string(path).map_err(|e| StoreError::io(path, e))?;
    if !text.is_empty() && !text.ends_with('\n') {
        let line = text.lines().count();
        return Err(StoreError::corrupt(path, line, "truncated final record"));
    }
    let mut rows = Vec::with_capacity(expected);
    for (i, line) in text.lines().enumerate() {
        let row = serde_json::from_str(line).map_err(|e| StoreError::corrupt(path, i + 1, e.to_string()))?;
        rows.push(row);
    }
    if rows.len() != expected {
        return Err(StoreError::corrupt(
            path,
            rows.len(),
            format!("manifest expects {expected} records, found {}", rows.len()),
        ));
    }
    Ok(rows)
}

/// Writes the three tables and a manifest. `manifest.counts` and
/// `manifest.format_version` are recomputed from `kb`.
pub fn save_with_manifest(
    kb: &GraphKb,
    dir: &Path,
    manifest: &IndexManifest,
) -> Result<IndexManifest, StoreError> {
    fs::create_dir_all(dir).map_err(|e| StoreError::io(dir, e))?;
    let fresh = IndexManifest::for_kb(kb);
    let manifest = IndexManifest {
        format_version: FORMAT_VERSION,
        counts: fresh.counts,
        description_cap: kb.description_cap(),
        ..manifest.clone()
    };
    write_jsonl(&dir.join(ENTITIES_FILE), kb.entities())?;
    write_jsonl(&dir.join(RELATIONS_FILE), kb.relations())?;
    write_jsonl(&dir.join(CHUNKS_FILE), kb.chunks())?;
    let path = dir.join(MANIFEST_FILE);
    let body = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&path, body + "\n").map_err(|e| StoreError::io(&path, e))?;
    Ok(manifest)
}

pub fn read_manifest(dir: &Path) -> Result<IndexManifest, StoreError> {
    let path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(|e| StoreError::io(&path, e))?;
    let raw: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| StoreError::corrupt(&path, e.line(), e.to_string()))?;
    let found = raw
        .get("format_version")
        .and_then(|v| v.as_u64())
        .ok_or_else(|| StoreError::corrupt(&path, 1, "missing format_version"))?;
    if found != u64::from(FORMAT_VERSION) {
        return Err(StoreError::VersionMismatch {
            file: path,
            found: found as u32,
            expected: FORMAT_VERSION,
        });
    }
    serde_json::from_value(raw).map_err(|e| StoreError::corrupt(&path, 1, e.to_string()))
}

pub fn load_with_manifest(dir: &Path) -> Result<(GraphKb, IndexManifest), StoreError> {
    let manifest = read_manifest(dir)?;
    let counts = &manifest.counts;
    let entities = read_jsonl(&dir.join(ENTITIES_FILE), counts.entities)?;
    let relations = read_jsonl(&dir.join(RELATIONS_FILE), counts.relations)?;
    let chunks = read_jsonl(&dir.join(CHUNKS_FILE), counts.chunks)?;
    let kb = GraphKb::from_tables(entities, relations, chunks, manifest.description_cap)
        .map_err(|reason| StoreError::corrupt(&dir.join(RELATIONS_FILE), 0, reason))?;
    Ok((kb, manifest))
}

impl GraphKb {
    pub fn save(&self, dir: &Path) -> Result<(), StoreError> {
        save_with_manifest(self, dir, &IndexManifest::for_kb(self)).map(|_| ())
    }

    pub fn load(dir: &Path) -> Result<GraphKb, StoreError> {
        load_with_manifest(dir).map(|(kb, _)| kb)
    }
}
