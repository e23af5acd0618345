#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::Arc;

use kgsearch::indexer::{build_index, load_corpus, Document, IndexerConfig, RuleBasedExtractor, WordUnits};
use kgsearch::kb::GraphKb;
use kgsearch::llm::{ScriptedLlm, Transcript, TranscriptEntry};
use kgsearch::pipeline::{SearchBudget, SearchConfig};
use kgsearch::retrieval::{GraphRetriever, HashingEmbedder, RetrieverConfig};

pub const WIZE_QUESTION: &str =
    "In what year was the county seat of the county containing the township that WIZE is licensed to founded?";

pub fn wize_golden() -> Vec<String> {
    [
        "WIZE is a radio station licensed to Ward Township.",
        "Ward Township is located in Randolph County.",
        "Randolph County has its county seat at Winchester.",
        "Winchester was founded in 1818.",
    ]
    .map(String::from)
    .to_vec()
}

pub fn fixture_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/wize")
}

pub fn kb_from_docs(docs: &[Document]) -> GraphKb {
    build_index(docs, &IndexerConfig::default(), &RuleBasedExtractor, &WordUnits)
        .unwrap()
        .kb
}

pub fn kb_from_sentences(sentences: &[&str]) -> GraphKb {
    let docs: Vec<Document> = sentences
        .iter()
        .enumerate()
        .map(|(i, s)| Document {
            doc_id: format!("doc-{i}"),
            title: None,
            body: s.to_string(),
        })
        .collect();
    kb_from_docs(&docs)
}

pub fn retriever_over(kb: GraphKb) -> GraphRetriever<f64> {
    GraphRetriever::build(Arc::new(kb), Arc::new(HashingEmbedder::default()), RetrieverConfig::default()).unwrap()
}

pub fn wize_retriever() -> GraphRetriever<f64> {
    let docs = load_corpus(&fixture_dir().join("corpus.jsonl")).unwrap();
    retriever_over(kb_from_docs(&docs))
}

pub fn wize_transcript() -> Transcript {
    Transcript::load(&fixture_dir().join("transcript.jsonl")).unwrap()
}

pub fn wize_llm() -> Arc<ScriptedLlm> {
    Arc::new(ScriptedLlm::new(wize_transcript().scoped(WIZE_QUESTION)))
}

/// Deep-search settings the WIZE transcript was written against.
pub fn wize_config() -> SearchConfig {
    SearchConfig {
        budget: SearchBudget {
            per_query_top_k: 3,
            ..SearchBudget::default()
        },
        ..SearchConfig::default()
    }
}

pub fn scripted(entries: Vec<TranscriptEntry>) -> Arc<ScriptedLlm> {
    Arc::new(ScriptedLlm::from_entries(entries))
}
