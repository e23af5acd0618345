use std::collections::HashMap;
use std::path::Path;
use std::sync::Arc;

use crate::kb::{ChunkId, EntityId, GraphKb, RelationId, StoreError};
use crate::scalar::{sort_ranked, Scalar};

use super::context::{RetrievedContext, Scored};
use super::embed::{EmbedError, Embedder};
use super::index::FlatIndex;
use super::{RetrievalError, Retriever, RetrieverConfig};

pub const CHUNK_SIDECAR: &str = "chunks.vec";
pub const ENTITY_SIDECAR: &str = "entities.vec";
pub const RELATION_SIDECAR: &str = "relations.vec";

const EMBED_BATCH: usize = 256;

/// Text embedded for an entity: `name: description`.
pub fn entity_text(kb: &GraphKb, id: EntityId) -> String {
    let e = kb.entity(id).expect("entity id from store");
    format!("{}: {}", e.name, e.description)
}

/// Text embedded for a relation: `head description tail`.
pub fn relation_text(kb: &GraphKb, id: RelationId) -> String {
    let r = kb.relation(id).expect("relation id from store");
    let head = &kb.entity(r.head_entity_id).expect("audited store").name;
    let tail = &kb.entity(r.tail_entity_id).expect("audited store").name;
    format!("{head} {} {tail}", r.description)
}

fn embed_all<S: Scalar>(
    embedder: &dyn Embedder<S>,
    texts: Vec<(u64, String)>,
) -> Result<FlatIndex<S>, EmbedError> {
    let mut index = FlatIndex::new(embedder.dimension());
    for batch in texts.chunks(EMBED_BATCH) {
        let refs: Vec<&str> = batch.iter().map(|(_, t)| t.as_str()).collect();
        let vectors = embedder.embed_batch(&refs)?;
        for ((id, _), v) in batch.iter().zip(&vectors) {
            index.insert(*id, v)?;
        }
    }
    Ok(index)
}

/// Embedding sidecars for the three tables of a store.
#[derive(Debug, Clone, PartialEq)]
pub struct RetrievalIndex<S> {
    pub chunks: FlatIndex<S>,
    pub entities: FlatIndex<S>,
    pub relations: FlatIndex<S>,
}

impl<S: Scalar> RetrievalIndex<S> {
    pub fn build(kb: &GraphKb, embedder: &dyn Embedder<S>) -> Result<Self, EmbedError> {
        let chunks = kb.chunks().iter().map(|c| (c.chunk_id.0, c.text.clone())).collect();
        let entities = kb
            .entities()
            .iter()
            .map(|e| (e.entity_id.0, entity_text(kb, e.entity_id)))
            .collect();
        let relations = kb
            .relations()
            .iter()
            .map(|r| (r.relation_id.0, relation_text(kb, r.relation_id)))
            .collect();
        Ok(Self {
            chunks: embed_all(embedder, chunks)?,
            entities: embed_all(embedder, entities)?,
            relations: embed_all(embedder, relations)?,
        })
    }

    pub fn save(&self, dir: &Path) -> Result<(), StoreError> {
        self.chunks.save(&dir.join(CHUNK_SIDECAR))?;
        self.entities.save(&dir.join(ENTITY_SIDECAR))?;
        self.relations.save(&dir.join(RELATION_SIDECAR))
    }

    /// Loads sidecars and checks them against the store they index.
    pub fn load(dir: &Path, kb: &GraphKb) -> Result<Self, StoreError> {
        let out = Self {
            chunks: FlatIndex::load(&dir.join(CHUNK_SIDECAR))?,
            entities: FlatIndex::load(&dir.join(ENTITY_SIDECAR))?,
            relations: FlatIndex::load(&dir.join(RELATION_SIDECAR))?,
        };
        let checks = [
            (CHUNK_SIDECAR, out.chunks.len(), kb.chunks().len()),
            (ENTITY_SIDECAR, out.entities.len(), kb.entities().len()),
            (RELATION_SIDECAR, out.relations.len(), kb.relations().len()),
        ];
        for (file, got, want) in checks {
            if got != want {
                return Err(StoreError::corrupt(
                    &dir.join(file),
                    0,
                    format!("{got} vectors for {want} store rows"),
                ));
            }
        }
        Ok(out)
    }

    pub fn dimension(&self) -> usize {
        self.chunks.dimension()
    }
}

/// Built-in dual-level retriever over a frozen store.
pub struct GraphRetriever<S: Scalar> {
    kb: Arc<GraphKb>,
    index: RetrievalIndex<S>,
    embedder: Arc<dyn Embedder<S>>,
    config: RetrieverConfig,
}

impl<S: Scalar> std::fmt::Debug for GraphRetriever<S> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GraphRetriever")
            .field("embedder", &self.embedder.identity())
            .field("config", &self.config)
            .finish_non_exhaustive()
    }
}

impl<S: Scalar> GraphRetriever<S> {
    pub fn build(
        kb: Arc<GraphKb>,
        embedder: Arc<dyn Embedder<S>>,
        config: RetrieverConfig,
    ) -> Result<Self, RetrievalError> {
        config.validate()?;
        let index = RetrievalIndex::build(&kb, embedder.as_ref())?;
        Ok(Self {
            kb,
            index,
            embedder,
            config,
        })
    }

    pub fn from_parts(
        kb: Arc<GraphKb>,
        index: RetrievalIndex<S>,
        embedder: Arc<dyn Embedder<S>>,
        config: RetrieverConfig,
    ) -> Result<Self, RetrievalError> {
        config.validate()?;
        if index.dimension() != embedder.dimension() {
            return Err(EmbedError::Dimension {
                expected: index.dimension(),
                got: embedder.dimension(),
            }
            .into());
        }
        Ok(Self {
            kb,
            index,
            embedder,
            config,
        })
    }

    pub fn index(&self) -> &RetrievalIndex<S> {
        &self.index
    }

    pub fn kb_handle(&self) -> Arc<GraphKb> {
        Arc::clone(&self.kb)
    }

    pub fn embedder_identity(&self) -> String {
        self.embedder.identity()
    }
}

fn check_k(k: usize) -> Result<(), RetrievalError> {
    if k == 0 {
        Err(RetrievalError::InvalidArgument("k must be at least 1".into()))
    } else {
        Ok(())
    }
}

impl<S: Scalar> Retriever<S> for GraphRetriever<S> {
    fn kb(&self) -> &GraphKb {
        &self.kb
    }

    fn config(&self) -> &RetrieverConfig {
        &self.config
    }

    fn semantic_retrieve(&self, query: &str, k: usize) -> Result<RetrievedContext<S>, RetrievalError> {
        check_k(k)?;
        let mut out = RetrievedContext::empty();
        if self.index.chunks.is_empty() {
            return Ok(out);
        }
        let q = self.embedder.embed(query)?;
        out.chunks = self
            .index
            .chunks
            .search(&q, k)?
            .into_iter()
            .map(|(id, score)| Scored {
                item: self.kb.chunk(ChunkId(id)).expect("sidecar matches store").clone(),
                score,
            })
            .collect();
        Ok(out)
    }

    fn relational_retrieve(
        &self,
        query: &str,
        k: usize,
        hop_expansion: usize,
    ) -> Result<RetrievedContext<S>, RetrievalError> {
        check_k(k)?;
        let mut out = RetrievedContext::empty();
        if self.index.entities.is_empty() && self.index.relations.is_empty() {
            return Ok(out);
        }
        let q = self.embedder.embed(query)?;
        let seeds = self.index.entities.search(&q, k)?;
        let direct_relations = self.index.relations.search(&q, k)?;

        let mut entity_scores: HashMap<u64, S> = seeds.iter().copied().collect();
        let mut relation_scores: HashMap<u64, S> = direct_relations.into_iter().collect();

        if hop_expansion > 0 {
            let decay = S::from_f64_lossy(self.config.hop_decay);
            for &(seed, seed_score) in &seeds {
                for (entity, dist) in self.kb.hop_distances(EntityId(seed), hop_expansion)? {
                    let reached = seed_score * decay.powi(dist as i32);
                    if dist > 0 {
                        raise(&mut entity_scores, entity.0, reached);
                    }
                    if dist < hop_expansion {
                        let via = reached * decay;
                        for rel in self.kb.incident(entity).expect("entity from store") {
                            raise(&mut relation_scores, rel.0, via);
                        }
                    }
                }
            }
        }

        out.entities = top_k(entity_scores, k)
            .into_iter()
            .map(|(id, score)| Scored {
                item: self.kb.entity(EntityId(id)).expect("id from store").clone(),
                score,
            })
            .collect();
        out.relations = top_k(relation_scores, k)
            .into_iter()
            .map(|(id, score)| Scored {
                item: self.kb.relation(RelationId(id)).expect("id from store").clone(),
                score,
            })
            .collect();
        Ok(out)
    }
}

fn raise<S: Scalar>(scores: &mut HashMap<u64, S>, id: u64, candidate: S) {
    scores
        .entry(id)
        .and_modify(|s| {
            if candidate > *s {
                *s = candidate;
            }
        })
        .or_insert(candidate);
}

fn top_k<S: Scalar>(scores: HashMap<u64, S>, k: usize) -> Vec<(u64, S)> {
    let mut v: Vec<(u64, S)> = scores.into_iter().collect();
    sort_ranked(&mut v, |t| (t.1, t.0));
    v.truncate(k);
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kb::EntityCandidate;
    use crate::retrieval::{HashingEmbedder, RetrievalMode};
    use std::collections::BTreeSet;

    fn retriever(kb: GraphKb) -> GraphRetriever<f64> {
        GraphRetriever::build(
            Arc::new(kb),
            Arc::new(HashingEmbedder::default()),
            RetrieverConfig::default(),
        )
        .unwrap()
    }

    fn three_chunks() -> GraphKb {
        let mut kb = GraphKb::new();
        kb.insert_chunk("d", 0, "the red fox jumps", 4).unwrap();
        kb.insert_chunk("d", 1, "a quiet blue lake", 4).unwrap();
        kb.insert_chunk("d", 2, "green hills at dawn", 4).unwrap();
        kb
    }

    fn chain() -> GraphKb {
        let mut kb = GraphKb::new();
        let a = kb
            .upsert_entity(EntityCandidate::named("Alpha").with_description("violin maker"))
            .unwrap();
        let b = kb
            .upsert_entity(EntityCandidate::named("Beta").with_description("harbor town"))
            .unwrap();
        let c = kb
            .upsert_entity(EntityCandidate::named("Gamma").with_description("mountain pass"))
            .unwrap();
        kb.insert_relation(a, b, vec![], "workshop located in", BTreeSet::new()).unwrap();
        kb.insert_relation(b, c, vec![], "road leads over", BTreeSet::new()).unwrap();
        kb
    }

    #[test]
    fn semantic_exact_text_is_top_one() {
        let r = retriever(three_chunks());
        let ctx = r.semantic_retrieve("a quiet blue lake", 1).unwrap();
        assert_eq!(ctx.chunks.len(), 1);
        assert_eq!(ctx.chunks[0].item.chunk_id, ChunkId(1));
        assert!(!ctx.has_graph_items());
    }

    #[test]
    fn semantic_k_beyond_corpus_returns_all() {
        let r = retriever(three_chunks());
        let ctx = r.semantic_retrieve("fox", 10).unwrap();
        assert_eq!(ctx.chunks.len(), 3);
        assert_eq!(ctx.chunks[0].item.chunk_id, ChunkId(0));
    }

    #[test]
    fn empty_index_gives_empty_context() {
        let r = retriever(GraphKb::new());
        assert!(r.semantic_retrieve("x", 3).unwrap().is_empty());
        assert!(r.relational_retrieve("x", 3, 1).unwrap().is_empty());
    }

    #[test]
    fn relational_description_ranks_relation_first() {
        let r = retriever(chain());
        let ctx = r.relational_retrieve("workshop located in", 1, 0).unwrap();
        assert_eq!(ctx.relations[0].item.relation_id, RelationId(0));
        assert!(ctx.chunks.is_empty());
    }

    #[test]
    fn hop_expansion_applies_decay() {
        let r = retriever(chain());
        // Only Alpha shares words with the query.
        let ctx = r.relational_retrieve("violin maker", 1, 1).unwrap();
        assert_eq!(ctx.entities.len(), 1);
        let ctx = r.relational_retrieve("violin maker", 3, 1).unwrap();
        let alpha = ctx.entities.iter().find(|s| s.item.name == "Alpha").unwrap().score;
        let beta = ctx.entities.iter().find(|s| s.item.name == "Beta").unwrap().score;
        assert!(alpha > 0.0);
        assert_eq!(beta, 0.5 * alpha);
        let no_hops = r.relational_retrieve("violin maker", 3, 0).unwrap();
        let beta0 = no_hops.entities.iter().find(|s| s.item.name == "Beta").unwrap().score;
        assert_eq!(beta0, 0.0);
    }

    #[test]
    fn hybrid_over_empty_graph_equals_semantic() {
        let r = retriever(three_chunks());
        let h = r.hybrid_retrieve("green hills", 2).unwrap();
        assert_eq!(h, r.semantic_retrieve("green hills", 2).unwrap());
        assert_eq!(r.retrieve("green hills", 2, RetrievalMode::Hybrid).unwrap(), h);
    }

    #[test]
    fn zero_k_is_invalid() {
        let r = retriever(three_chunks());
        assert!(r.semantic_retrieve("x", 0).is_err());
    }

    #[test]
    fn sidecars_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let kb = chain();
        let r = retriever(kb.clone());
        r.index().save(dir.path()).unwrap();
        let back = RetrievalIndex::<f64>::load(dir.path(), &kb).unwrap();
        assert_eq!(&back, r.index());
    }
}
