//! Corpus → graph KB: chunking, extraction, aggregation.

mod chunk;
mod extract;

use std::collections::{BTreeSet, HashSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kb::store::{save_with_manifest, ChunkingParams, StoreCounts};
use crate::kb::{ChunkId, EntityCandidate, GraphKb, IndexManifest, KbError, StoreError, DEFAULT_DESCRIPTION_CAP};

pub use chunk::{chunk_document, reconstruct_units, ChunkSpan, UnitSplitter, WordUnits};
pub use extract::{
    parse_extraction, ExtractedEntity, ExtractedRelation, Extraction, ExtractionResult, Extractor, LlmExtractor,
    RuleBasedExtractor,
};

pub const BUILD_REPORT_FILE: &str = "build_report.json";
pub const DEFAULT_CHUNK_SIZE_UNITS: usize = 400;

#[derive(Debug, Error)]
pub enum IndexError {
    #[error("invalid indexer configuration: {0}")]
    Config(String),
    #[error("document {doc_id}: {reason}")]
    Chunking { doc_id: String, reason: String },
    #[error("{file}:{line}: {reason}")]
    Corpus { file: String, line: usize, reason: String },
    #[error("{file}: {source}")]
    Io {
        file: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Kb(#[from] KbError),
    #[error(transparent)]
    Store(#[from] StoreError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: String,
    #[serde(default)]
    pub title: Option<String>,
    pub body: String,
}

/// Reads one JSON document per line; blank lines are skipped.
pub fn load_corpus(path: &Path) -> Result<Vec<Document>, IndexError> {
    let file = path.display().to_string();
    let text = fs::read_to_string(path).map_err(|source| IndexError::Io {
        file: file.clone(),
        source,
    })?;
    parse_corpus(&text, &file)
}

pub fn parse_corpus(text: &str, file: &str) -> Result<Vec<Document>, IndexError> {
    let mut docs = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let corpus_err = |reason: String| IndexError::Corpus {
            file: file.to_string(),
            line: i + 1,
            reason,
        };
        let doc: Document = serde_json::from_str(line).map_err(|e| corpus_err(e.to_string()))?;
        if !seen.insert(doc.doc_id.clone()) {
            return Err(corpus_err(format!("duplicate doc_id {}", doc.doc_id)));
        }
        docs.push(doc);
    }
    if docs.is_empty() {
        return Err(IndexError::Corpus {
            file: file.to_string(),
            line: 0,
            reason: "corpus is empty".into(),
        });
    }
    Ok(docs)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct IndexerConfig {
    pub chunk_size_units: usize,
    pub overlap_units: usize,
    /// Upper bound on concurrent extraction calls.
    pub parallelism: usize,
    pub extract_attempts: u32,
    pub description_cap: usize,
}

impl Default for IndexerConfig {
    fn default() -> Self {
        Self {
            chunk_size_units: DEFAULT_CHUNK_SIZE_UNITS,
            overlap_units: 0,
            parallelism: 4,
            extract_attempts: 2,
            description_cap: DEFAULT_DESCRIPTION_CAP,
        }
    }
}

impl IndexerConfig {
    pub fn validate(&self) -> Result<(), IndexError> {
        if self.chunk_size_units == 0 || self.overlap_units >= self.chunk_size_units {
            return Err(IndexError::Config(format!(
                "chunk_size_units {} / overlap_units {}: need size >= 1 and overlap < size",
                self.chunk_size_units, self.overlap_units
            )));
        }
        if self.parallelism == 0 {
            return Err(IndexError::Config("parallelism must be at least 1".into()));
        }
        if self.extract_attempts == 0 {
            return Err(IndexError::Config("extract_attempts must be at least 1".into()));
        }
        Ok(())
    }

    pub fn chunking(&self, splitter: &dyn UnitSplitter) -> ChunkingParams {
        ChunkingParams {
            chunk_size_units: self.chunk_size_units,
            overlap_units: self.overlap_units,
            unit: splitter.name().to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractionFailure {
    pub chunk_id: ChunkId,
    pub doc_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BuildReport {
    pub extractor: String,
    pub counts: StoreCounts,
    /// Entity candidates seen across all chunks.
    pub entity_mentions: usize,
    /// Candidates that merged into an already stored entity.
    pub merged_mentions: usize,
    /// Relation endpoints not listed among the chunk's entities, inserted bare.
    pub implicit_entities: usize,
    pub self_loops: usize,
    pub failures: Vec<ExtractionFailure>,
}

#[derive(Debug, Clone)]
pub struct BuildOutput {
    pub kb: GraphKb,
    pub report: BuildReport,
    pub chunking: ChunkingParams,
}

/// Runs `extractor` over every chunk with at most `parallelism` workers.
/// Results come back in chunk order regardless of completion order.
fn extract_all(kb: &GraphKb, extractor: &dyn Extractor, parallelism: usize) -> Vec<Extraction> {
    let chunks = kb.chunks();
    let slots: Vec<Mutex<Option<Extraction>>> = chunks.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let workers = parallelism.min(chunks.len()).max(1);
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(chunk) = chunks.get(i) else { break };
                let out = extractor.extract(chunk);
                *slots[i].lock().unwrap_or_else(|e| e.into_inner()) = Some(out);
            });
        }
    });
    slots
        .into_iter()
        .map(|s| s.into_inner().unwrap_or_else(|e| e.into_inner()).unwrap_or_default())
        .collect()
}

fn upsert_counted(kb: &mut GraphKb, candidate: EntityCandidate, merged: &mut usize) -> Result<crate::kb::EntityId, KbError> {
    let before = kb.entities().len();
    let id = kb.upsert_entity(candidate)?;
    if kb.entities().len() == before {
        *merged += 1;
    }
    Ok(id)
}

pub fn build_index(
    corpus: &[Document],
    config: &IndexerConfig,
    extractor: &dyn Extractor,
    splitter: &dyn UnitSplitter,
) -> Result<BuildOutput, IndexError> {
    config.validate()?;
    if corpus.is_empty() {
        return Err(IndexError::Config("corpus is empty".into()));
    }
    let mut kb = GraphKb::with_description_cap(config.description_cap);
    for doc in corpus {
        for span in chunk_document(doc, config.chunk_size_units, config.overlap_units, splitter)? {
            kb.insert_chunk(span.doc_id, span.ordinal, span.text, span.unit_count)?;
        }
    }

    let extractions = extract_all(&kb, extractor, config.parallelism);
    let mut report = BuildReport {
        extractor: extractor.identity(),
        ..BuildReport::default()
    };
    for (i, extraction) in extractions.into_iter().enumerate() {
        let chunk_id = kb.chunks()[i].chunk_id;
        if let Some(reason) = extraction.failure {
            report.failures.push(ExtractionFailure {
                chunk_id,
                doc_id: kb.chunks()[i].doc_id.clone(),
                reason,
            });
        }
        let result = extraction.result;
        let mut local = HashSet::new();
        for entity in result.entities {
            if crate::kb::normalize_name(&entity.name).is_empty() {
                continue;
            }
            report.entity_mentions += 1;
            local.insert(crate::kb::normalize_name(&entity.name));
            let candidate = EntityCandidate {
                name: entity.name,
                properties: entity.properties,
                description: entity.description,
                source_chunk_ids: BTreeSet::from([chunk_id]),
            };
            upsert_counted(&mut kb, candidate, &mut report.merged_mentions)?;
        }
        for relation in result.relations {
            let mut ends = [None, None];
            for (slot, name) in ends.iter_mut().zip([&relation.head, &relation.tail]) {
                let key = crate::kb::normalize_name(name);
                if key.is_empty() {
                    break;
                }
                let known = kb.find_entity(name);
                *slot = match known {
                    Some(id) if local.contains(&key) => Some(id),
                    _ => {
                        if known.is_none() {
                            report.implicit_entities += 1;
                        }
                        local.insert(key);
                        let candidate = EntityCandidate::named(name.as_str()).with_source(chunk_id);
                        Some(kb.upsert_entity(candidate)?)
                    }
                };
            }
            let [Some(head), Some(tail)] = ends else {
                continue;
            };
            kb.insert_relation(
                head,
                tail,
                relation.properties,
                relation.description,
                BTreeSet::from([chunk_id]),
            )?;
        }
    }
    report.self_loops = kb.self_loop_count();
    report.counts = IndexManifest::for_kb(&kb).counts;
    Ok(BuildOutput {
        kb,
        report,
        chunking: config.chunking(splitter),
    })
}

/// Persists the store, a manifest, and the build report into `dir`.
pub fn save_build(output: &BuildOutput, dir: &Path, embedder: Option<String>) -> Result<IndexManifest, IndexError> {
    let manifest = IndexManifest {
        chunking: Some(output.chunking.clone()),
        extractor: output.report.extractor.clone(),
        embedder,
        ..IndexManifest::for_kb(&output.kb)
    };
    let manifest = save_with_manifest(&output.kb, dir, &manifest)?;
    let path: PathBuf = dir.join(BUILD_REPORT_FILE);
    let body = serde_json::to_string_pretty(&output.report).expect("report serializes");
    fs::write(&path, body + "\n").map_err(|source| IndexError::Io {
        file: path.display().to_string(),
        source,
    })?;
    Ok(manifest)
}
