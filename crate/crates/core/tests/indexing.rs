mod common;

use std::sync::Arc;

use common::*;
use kgsearch::indexer::{
    build_index, load_corpus, save_build, Document, IndexError, IndexerConfig, LlmExtractor, RuleBasedExtractor,
    WordUnits, BUILD_REPORT_FILE,
};
use kgsearch::kb::store::read_manifest;
use kgsearch::kb::{EntityId, GraphKb, StoreError};
use kgsearch::llm::{ScriptedLlm, TemplateId, TranscriptEntry};
use kgsearch::retrieval::{GraphRetriever, HashingEmbedder, RetrievalIndex, Retriever, RetrieverConfig};

fn doc(id: &str, body: &str) -> Document {
    Document {
        doc_id: id.into(),
        title: None,
        body: body.into(),
    }
}

#[test]
fn scripted_extraction_builds_two_entities_and_a_relation() {
    let llm = Arc::new(ScriptedLlm::from_entries(vec![TranscriptEntry::any(
        TemplateId::Extract,
        "E|WIZE|kind=radio station|WIZE is a radio station.\n\
         E|Ward Township|kind=township|Ward Township is a township in Ohio.\n\
         R|WIZE|Ward Township|predicate=licensed to|WIZE is licensed to Ward Township.",
    )]));
    let out = build_index(
        &[doc("wize", "WIZE is a radio station licensed to Ward Township.")],
        &IndexerConfig::default(),
        &LlmExtractor::new(llm, 2),
        &WordUnits,
    )
    .unwrap();
    let kb = &out.kb;
    assert_eq!(kb.entities().len(), 2);
    assert_eq!(kb.relations().len(), 1);
    let rel = &kb.relations()[0];
    assert_eq!(kb.entity(rel.head_entity_id).unwrap().name, "WIZE");
    assert_eq!(kb.entity(rel.tail_entity_id).unwrap().name, "Ward Township");
    assert!(rel.source_chunk_ids.contains(&kb.chunks()[0].chunk_id));
    assert!(kb.audit().is_ok());
    assert!(out.report.failures.is_empty());
}

#[test]
fn unparseable_extraction_is_recorded_as_failure() {
    let llm = Arc::new(ScriptedLlm::from_entries(vec![TranscriptEntry::any(TemplateId::Extract, "I cannot help")]));
    let out = build_index(
        &[doc("a", "Some text here.")],
        &IndexerConfig::default(),
        &LlmExtractor::new(llm.clone(), 2),
        &WordUnits,
    )
    .unwrap();
    assert_eq!(out.report.failures.len(), 1);
    assert_eq!(out.kb.chunks().len(), 1);
    assert_eq!(out.kb.entities().len(), 0);
    assert_eq!(llm.call_count(), 2);
}

#[test]
fn shared_names_merge_across_documents() {
    let out = build_index(
        &[
            doc("a", "Winchester was founded in 1818."),
            doc("b", "Randolph County has its county seat at Winchester."),
        ],
        &IndexerConfig::default(),
        &RuleBasedExtractor,
        &WordUnits,
    )
    .unwrap();
    let id = out.kb.find_entity("winchester").unwrap();
    let e = out.kb.entity(id).unwrap();
    assert_eq!(e.source_chunk_ids.len(), 2);
    assert!(e.description.contains(" | "));
    assert!(out.report.merged_mentions >= 1);
}

#[test]
fn saved_index_reloads_into_equal_retrieval() {
    let docs = load_corpus(&fixture_dir().join("corpus.jsonl")).unwrap();
    let out = build_index(&docs, &IndexerConfig::default(), &RuleBasedExtractor, &WordUnits).unwrap();
    let tmp = tempfile::tempdir().unwrap();
    let embedder = HashingEmbedder::default();
    let manifest = save_build(&out, tmp.path(), Some(kgsearch::retrieval::Embedder::<f64>::identity(&embedder))).unwrap();
    assert_eq!(manifest.counts.chunks, out.kb.chunks().len());
    assert!(tmp.path().join(BUILD_REPORT_FILE).exists());
    let index = RetrievalIndex::<f64>::build(&out.kb, &embedder).unwrap();
    index.save(tmp.path()).unwrap();

    let kb = GraphKb::load(tmp.path()).unwrap();
    assert_eq!(kb, out.kb);
    let read = read_manifest(tmp.path()).unwrap();
    assert_eq!(read.embedder.as_deref(), Some("hashing-fnv1a-256"));
    let loaded = RetrievalIndex::<f64>::load(tmp.path(), &kb).unwrap();
    assert_eq!(loaded, index);

    let kb = Arc::new(kb);
    let fresh = GraphRetriever::build(Arc::clone(&kb), Arc::new(embedder), RetrieverConfig::default()).unwrap();
    let reloaded = GraphRetriever::from_parts(kb, loaded, Arc::new(embedder), RetrieverConfig::default()).unwrap();
    for q in [WIZE_QUESTION, "Winchester founded", "Ward Township - located in - ?"] {
        assert_eq!(fresh.hybrid_retrieve(q, 4).unwrap(), reloaded.hybrid_retrieve(q, 4).unwrap());
    }
}

#[test]
fn sidecar_row_count_mismatch_is_corrupt() {
    let out = build_index(&[doc("a", "Alpha met Beta.")], &IndexerConfig::default(), &RuleBasedExtractor, &WordUnits)
        .unwrap();
    let tmp = tempfile::tempdir().unwrap();
    RetrievalIndex::<f64>::build(&GraphKb::new(), &HashingEmbedder::default())
        .unwrap()
        .save(tmp.path())
        .unwrap();
    assert!(matches!(
        RetrievalIndex::<f64>::load(tmp.path(), &out.kb),
        Err(StoreError::Corrupt { .. })
    ));
}

#[test]
fn truncated_store_reports_file_and_line() {
    let out = build_index(
        &load_corpus(&fixture_dir().join("corpus.jsonl")).unwrap(),
        &IndexerConfig::default(),
        &RuleBasedExtractor,
        &WordUnits,
    )
    .unwrap();
    let tmp = tempfile::tempdir().unwrap();
    out.kb.save(tmp.path()).unwrap();
    let path = tmp.path().join("entities.jsonl");
    let text = std::fs::read_to_string(&path).unwrap();
    let mut lines: Vec<&str> = text.lines().collect();
    lines[2] = "{\"entity_id\": \"2\", \"name\": ";
    std::fs::write(&path, lines.join("\n") + "\n").unwrap();
    match GraphKb::load(tmp.path()) {
        Err(StoreError::Corrupt { file, line, .. }) => {
            assert!(file.ends_with("entities.jsonl"));
            assert_eq!(line, 3);
        }
        other => panic!("expected corrupt store, got {other:?}"),
    }
}

#[test]
fn invalid_config_is_rejected_before_work() {
    let config = IndexerConfig {
        chunk_size_units: 10,
        overlap_units: 10,
        ..IndexerConfig::default()
    };
    let err = build_index(&[doc("a", "x")], &config, &RuleBasedExtractor, &WordUnits).unwrap_err();
    assert!(matches!(err, IndexError::Config(_)));
}

#[test]
fn relational_retrieval_reaches_neighbors_through_hops() {
    let r = wize_retriever();
    let kb = r.kb();
    let ward = kb.find_entity("Ward Township").unwrap();
    let ctx = r.relational_retrieve("WIZE radio station", 10, 2).unwrap();
    let ids: Vec<EntityId> = ctx.entities.iter().map(|s| s.item.entity_id).collect();
    assert!(ids.contains(&ward));
    assert!(ctx.chunks.is_empty());
}
