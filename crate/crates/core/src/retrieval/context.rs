use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::kb::{Chunk, ChunkId, Entity, EntityId, Relation, RelationId};
use crate::scalar::{sort_ranked, Scalar};

/// Items that carry a store id usable as a merge key and tie-breaker.
pub trait Keyed {
    fn key(&self) -> u64;
}

impl Keyed for Entity {
    fn key(&self) -> u64 {
        self.entity_id.0
    }
}

impl Keyed for Relation {
    fn key(&self) -> u64 {
        self.relation_id.0
    }
}

impl Keyed for Chunk {
    fn key(&self) -> u64 {
        self.chunk_id.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Serialize, S: Serialize", deserialize = "T: Deserialize<'de>, S: Deserialize<'de>"))]
pub struct Scored<T, S> {
    pub item: T,
    pub score: S,
}

/// Entities, relations and chunks returned for one query. Each list is
/// ordered by descending score, ties by ascending id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct RetrievedContext<S> {
    pub entities: Vec<Scored<Entity, S>>,
    pub relations: Vec<Scored<Relation, S>>,
    pub chunks: Vec<Scored<Chunk, S>>,
}

impl<S> Default for RetrievedContext<S> {
    fn default() -> Self {
        Self {
            entities: Vec::new(),
            relations: Vec::new(),
            chunks: Vec::new(),
        }
    }
}

/// Id sets of a context; used for subset and monotonicity checks.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextIds {
    pub entities: BTreeSet<EntityId>,
    pub relations: BTreeSet<RelationId>,
    pub chunks: BTreeSet<ChunkId>,
}

impl ContextIds {
    pub fn is_subset(&self, other: &ContextIds) -> bool {
        self.entities.is_subset(&other.entities)
            && self.relations.is_subset(&other.relations)
            && self.chunks.is_subset(&other.chunks)
    }

    pub fn len(&self) -> usize {
        self.entities.len() + self.relations.len() + self.chunks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl<S: Scalar> RetrievedContext<S> {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn is_empty(&self) -> bool {
        self.entities.is_empty() && self.relations.is_empty() && self.chunks.is_empty()
    }

    pub fn len(&self) -> usize {
        self.entities.len() + self.relations.len() + self.chunks.len()
    }

    pub fn has_graph_items(&self) -> bool {
        !self.entities.is_empty() || !self.relations.is_empty()
    }

    pub fn ids(&self) -> ContextIds {
        ContextIds {
            entities: self.entities.iter().map(|s| s.item.entity_id).collect(),
            relations: self.relations.iter().map(|s| s.item.relation_id).collect(),
            chunks: self.chunks.iter().map(|s| s.item.chunk_id).collect(),
        }
    }

    /// Keeps only the items whose ids are in `keep`, preserving order and scores.
    pub fn restricted_to(&self, keep: &ContextIds) -> Self {
        Self {
            entities: self
                .entities
                .iter()
                .filter(|s| keep.entities.contains(&s.item.entity_id))
                .cloned()
                .collect(),
            relations: self
                .relations
                .iter()
                .filter(|s| keep.relations.contains(&s.item.relation_id))
                .cloned()
                .collect(),
            chunks: self
                .chunks
                .iter()
                .filter(|s| keep.chunks.contains(&s.item.chunk_id))
                .cloned()
                .collect(),
        }
    }

    /// All texts that can carry evidence: chunk bodies and graph descriptions.
    pub fn evidence_texts(&self) -> impl Iterator<Item = &str> {
        self.chunks
            .iter()
            .map(|c| c.item.text.as_str())
            .chain(self.entities.iter().map(|e| e.item.description.as_str()))
            .chain(self.relations.iter().map(|r| r.item.description.as_str()))
    }

    pub fn truncate(&mut self, k: usize) {
        self.entities.truncate(k);
        self.relations.truncate(k);
        self.chunks.truncate(k);
    }
}

fn merge_list<T: Keyed + Clone, S: Scalar>(a: &[Scored<T, S>], b: &[Scored<T, S>]) -> Vec<Scored<T, S>> {
    let mut best: HashMap<u64, &Scored<T, S>> = HashMap::with_capacity(a.len() + b.len());
    for item in a.iter().chain(b) {
        best.entry(item.item.key())
            .and_modify(|cur| {
                if item.score > cur.score {
                    *cur = item;
                }
            })
            .or_insert(item);
    }
    let mut out: Vec<Scored<T, S>> = best.into_values().cloned().collect();
    sort_ranked(&mut out, |x| (x.score, x.item.key()));
    out
}

/// Per-list union keyed by id, keeping the maximum score, re-sorted by
/// descending score then ascending id.
pub fn merge_contexts<S: Scalar>(a: &RetrievedContext<S>, b: &RetrievedContext<S>) -> RetrievedContext<S> {
    RetrievedContext {
        entities: merge_list(&a.entities, &b.entities),
        relations: merge_list(&a.relations, &b.relations),
        chunks: merge_list(&a.chunks, &b.chunks),
    }
}
