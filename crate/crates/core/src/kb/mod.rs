//! Graph knowledge base: entities, relations and source chunks with adjacency.
//!
//! The store is a directed multigraph. Ids are dense integers assigned in
//! insertion order, so every lookup is a vector index. Entities are merged on
//! a normalized form of their name (case-folded, whitespace collapsed).

mod ids;
pub mod store;

use std::collections::{BTreeSet, HashMap, HashSet, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use ids::{ChunkId, EntityId, RelationId};
pub use store::{IndexManifest, StoreError, FORMAT_VERSION};

/// Separator placed between descriptions merged into one entity.
pub const DESCRIPTION_SEPARATOR: &str = " | ";

/// Default cap, in characters, on a merged entity description.
pub const DEFAULT_DESCRIPTION_CAP: usize = 2048;

/// Free-form key/value property attached to entities and relations.
pub type Property = (String, String);

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum KbError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("{kind} {id} not found")]
    NotFound { kind: &'static str, id: String },
    #[error("duplicate chunk position ({doc_id}, {ordinal})")]
    DuplicateChunk { doc_id: String, ordinal: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chunk {
    pub chunk_id: ChunkId,
    pub doc_id: String,
    pub ordinal: usize,
    pub text: String,
    pub unit_count: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Entity {
    pub entity_id: EntityId,
    pub name: String,
    pub properties: Vec<Property>,
    pub description: String,
    pub source_chunk_ids: BTreeSet<ChunkId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Relation {
    pub relation_id: RelationId,
    pub head_entity_id: EntityId,
    pub tail_entity_id: EntityId,
    pub properties: Vec<Property>,
    pub description: String,
    pub source_chunk_ids: BTreeSet<ChunkId>,
}

impl Relation {
    pub fn is_self_loop(&self) -> bool {
        self.head_entity_id == self.tail_entity_id
    }

    /// The endpoint opposite to `from`, or `None` if `from` is not an endpoint.
    pub fn other_end(&self, from: EntityId) -> Option<EntityId> {
        if self.head_entity_id == from {
            Some(self.tail_entity_id)
        } else if self.tail_entity_id == from {
            Some(self.head_entity_id)
        } else {
            None
        }
    }
}

/// Entity-like input to [`GraphKb::upsert_entity`].
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityCandidate {
    pub name: String,
    pub properties: Vec<Property>,
    pub description: String,
    pub source_chunk_ids: BTreeSet<ChunkId>,
}

impl EntityCandidate {
    pub fn named(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            ..Self::default()
        }
    }

    pub fn with_description(mut self, description: impl Into<String>) -> Self {
        self.description = description.into();
        self
    }

    pub fn with_source(mut self, chunk: ChunkId) -> Self {
        self.source_chunk_ids.insert(chunk);
        self
    }
}

/// Induced neighbourhood returned by [`GraphKb::neighbors`].
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Subgraph {
    pub entities: Vec<EntityId>,
    pub relations: Vec<RelationId>,
}

/// Case-folds and collapses internal whitespace; the entity merge key.
pub fn normalize_name(name: &str) -> String {
    name.split_whitespace()
        .map(|w| w.to_lowercase())
        .collect::<Vec<_>>()
        .join(" ")
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GraphKb {
    entities: Vec<Entity>,
    relations: Vec<Relation>,
    chunks: Vec<Chunk>,
    adjacency: Vec<BTreeSet<RelationId>>,
    name_index: HashMap<String, EntityId>,
    chunk_positions: HashSet<(String, usize)>,
    description_cap: usize,
}

impl Default for GraphKb {
    fn default() -> Self {
        Self::new()
    }
}

impl GraphKb {
    pub fn new() -> Self {
        Self::with_description_cap(DEFAULT_DESCRIPTION_CAP)
    }

    pub fn with_description_cap(cap: usize) -> Self {
        Self {
            entities: Vec::new(),
            relations: Vec::new(),
            chunks: Vec::new(),
            adjacency: Vec::new(),
            name_index: HashMap::new(),
            chunk_positions: HashSet::new(),
            description_cap: cap.max(1),
        }
    }

    pub fn description_cap(&self) -> usize {
        self.description_cap
    }

    pub fn entities(&self) -> &[Entity] {
        &self.entities
    }

    pub fn relations(&self) -> &[Relation] {
        &self.relations
    }

    pub fn chunks(&self) -> &[Chunk] {
        &self.chunks
    }

    pub fn entity(&self, id: EntityId) -> Option<&Entity> {
        self.entities.get(id.index())
    }

    pub fn relation(&self, id: RelationId) -> Option<&Relation> {
        self.relations.get(id.index())
    }

    pub fn chunk(&self, id: ChunkId) -> Option<&Chunk> {
        self.chunks.get(id.index())
    }

    pub fn is_empty(&self) -> bool {
        self.entities.is_empty() && self.relations.is_empty() && self.chunks.is_empty()
    }

    /// Looks up an entity by name under the merge normalization.
    pub fn find_entity(&self, name: &str) -> Option<EntityId> {
        self.name_index.get(&normalize_name(name)).copied()
    }

    /// Relation ids incident to `id`, in ascending order.
    pub fn incident(&self, id: EntityId) -> Option<&BTreeSet<RelationId>> {
        self.adjacency.get(id.index())
    }

    pub fn self_loop_count(&self) -> usize {
        self.relations.iter().filter(|r| r.is_self_loop()).count()
    }

    pub fn insert_chunk(
        &mut self,
        doc_id: impl Into<String>,
        ordinal: usize,
        text: impl Into<String>,
        unit_count: usize,
    ) -> Result<ChunkId, KbError> {
        let doc_id = doc_id.into();
        let text = text.into();
        if text.trim().is_empty() {
            return Err(KbError::InvalidArgument("chunk text is empty".into()));
        }
        if !self.chunk_positions.insert((doc_id.clone(), ordinal)) {
            return Err(KbError::DuplicateChunk { doc_id, ordinal });
        }
        let chunk_id = ChunkId(self.chunks.len() as u64);
        self.chunks.push(Chunk {
            chunk_id,
            doc_id,
            ordinal,
            text,
            unit_count,
        });
        Ok(chunk_id)
    }

    fn check_chunks(&self, ids: &BTreeSet<ChunkId>) -> Result<(), KbError> {
        match ids.iter().find(|c| self.chunk(**c).is_none()) {
            Some(missing) => Err(KbError::NotFound {
                kind: "chunk",
                id: missing.to_string(),
            }),
            None => Ok(()),
        }
    }

    /// Inserts an entity, or merges into the existing one with the same
    /// normalized name.
    pub fn upsert_entity(&mut self, candidate: EntityCandidate) -> Result<EntityId, KbError> {
        let key = normalize_name(&candidate.name);
        if key.is_empty() {
            return Err(KbError::InvalidArgument("entity name is empty".into()));
        }
        self.check_chunks(&candidate.source_chunk_ids)?;

        if let Some(&id) = self.name_index.get(&key) {
            let cap = self.description_cap;
            let entity = &mut self.entities[id.index()];
            for prop in candidate.properties {
                if !entity.properties.contains(&prop) {
                    entity.properties.push(prop);
                }
            }
            entity.source_chunk_ids.extend(candidate.source_chunk_ids);
            merge_description(&mut entity.description, &candidate.description, cap);
            return Ok(id);
        }

        let entity_id = EntityId(self.entities.len() as u64);
        let mut description = String::new();
        merge_description(&mut description, &candidate.description, self.description_cap);
        let mut properties: Vec<Property> = Vec::with_capacity(candidate.properties.len());
        for prop in candidate.properties {
            if !properties.contains(&prop) {
                properties.push(prop);
            }
        }
        self.entities.push(Entity {
            entity_id,
            name: candidate.name.split_whitespace().collect::<Vec<_>>().join(" "),
            properties,
            description,
            source_chunk_ids: candidate.source_chunk_ids,
        });
        self.adjacency.push(BTreeSet::new());
        self.name_index.insert(key, entity_id);
        Ok(entity_id)
    }

    /// Stores a directed relation. Parallel relations and self-loops are kept.
    pub fn insert_relation(
        &mut self,
        head: EntityId,
        tail: EntityId,
        properties: Vec<Property>,
        description: impl Into<String>,
        source_chunk_ids: BTreeSet<ChunkId>,
    ) -> Result<RelationId, KbError> {
        for end in [head, tail] {
            if self.entity(end).is_none() {
                return Err(KbError::NotFound {
                    kind: "entity",
                    id: end.to_string(),
                });
            }
        }
        self.check_chunks(&source_chunk_ids)?;
        let relation_id = RelationId(self.relations.len() as u64);
        self.relations.push(Relation {
            relation_id,
            head_entity_id: head,
            tail_entity_id: tail,
            properties,
            description: description.into(),
            source_chunk_ids,
        });
        self.adjacency[head.index()].insert(relation_id);
        self.adjacency[tail.index()].insert(relation_id);
        Ok(relation_id)
    }

    /// Shortest undirected hop distance from `start` to every entity within
    /// `hops`, ordered by (distance, id). `start` itself is at distance 0.
    pub fn hop_distances(
        &self,
        start: EntityId,
        hops: usize,
    ) -> Result<Vec<(EntityId, usize)>, KbError> {
        if self.entity(start).is_none() {
            return Err(KbError::NotFound {
                kind: "entity",
                id: start.to_string(),
            });
        }
        let mut dist: HashMap<EntityId, usize> = HashMap::new();
        let mut queue = VecDeque::new();
        dist.insert(start, 0);
        queue.push_back(start);
        while let Some(current) = queue.pop_front() {
            let d = dist[&current];
            if d == hops {
                continue;
            }
            for rel in &self.adjacency[current.index()] {
                let Some(next) = self.relations[rel.index()].other_end(current) else {
                    continue;
                };
                if !dist.contains_key(&next) {
                    dist.insert(next, d + 1);
                    queue.push_back(next);
                }
            }
        }
        let mut out: Vec<_> = dist.into_iter().collect();
        out.sort_by_key(|(id, d)| (*d, *id));
        Ok(out)
    }

    /// Entities reachable from `id` within `hops` traversals (in either
    /// direction), plus the relations traversed to reach them.
    pub fn neighbors(&self, id: EntityId, hops: usize) -> Result<Subgraph, KbError> {
        if hops == 0 {
            return Err(KbError::InvalidArgument("hops must be at least 1".into()));
        }
        let reached = self.hop_distances(id, hops)?;
        let mut relations = BTreeSet::new();
        for (entity, d) in &reached {
            if *d < hops {
                relations.extend(self.adjacency[entity.index()].iter().copied());
            }
        }
        let mut entities: Vec<EntityId> = reached.into_iter().map(|(e, _)| e).collect();
        entities.sort();
        Ok(Subgraph {
            entities,
            relations: relations.into_iter().collect(),
        })
    }

    /// Full-store consistency check. Returns every violation found.
    pub fn audit(&self) -> Result<(), Vec<String>> {
        let mut problems = Vec::new();
        for (i, c) in self.chunks.iter().enumerate() {
            if c.chunk_id.index() != i {
                problems.push(format!("chunk at slot {i} has id {}", c.chunk_id));
            }
            if c.text.trim().is_empty() {
                problems.push(format!("chunk {} has empty text", c.chunk_id));
            }
        }
        if self.adjacency.len() != self.entities.len() {
            problems.push(format!(
                "adjacency has {} rows for {} entities",
                self.adjacency.len(),
                self.entities.len()
            ));
        }
        for (i, e) in self.entities.iter().enumerate() {
            if e.entity_id.index() != i {
                problems.push(format!("entity at slot {i} has id {}", e.entity_id));
            }
            if normalize_name(&e.name).is_empty() {
                problems.push(format!("entity {} has empty name", e.entity_id));
            }
            if self.name_index.get(&normalize_name(&e.name)) != Some(&e.entity_id) {
                problems.push(format!("entity {} missing from name index", e.entity_id));
            }
            for c in &e.source_chunk_ids {
                if self.chunk(*c).is_none() {
                    problems.push(format!("entity {} cites missing chunk {c}", e.entity_id));
                }
            }
        }
        for (i, r) in self.relations.iter().enumerate() {
            if r.relation_id.index() != i {
                problems.push(format!("relation at slot {i} has id {}", r.relation_id));
            }
            for end in [r.head_entity_id, r.tail_entity_id] {
                match self.adjacency.get(end.index()) {
                    Some(adj) if adj.contains(&r.relation_id) => {}
                    Some(_) => problems.push(format!(
                        "relation {} absent from adjacency of {end}",
                        r.relation_id
                    )),
                    None => problems.push(format!(
                        "relation {} has dangling endpoint {end}",
                        r.relation_id
                    )),
                }
            }
            for c in &r.source_chunk_ids {
                if self.chunk(*c).is_none() {
                    problems.push(format!("relation {} cites missing chunk {c}", r.relation_id));
                }
            }
        }
        for (i, adj) in self.adjacency.iter().enumerate() {
            let owner = EntityId(i as u64);
            for rel in adj {
                match self.relation(*rel) {
                    Some(r) if r.other_end(owner).is_some() => {}
                    _ => problems.push(format!("adjacency of {owner} lists unrelated {rel}")),
                }
            }
        }
        if self.name_index.len() != self.entities.len() {
            problems.push("name index size differs from entity count".into());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(problems)
        }
    }

    /// Rebuilds a store from its three tables. Used by the loader.
    pub(crate) fn from_tables(
        entities: Vec<Entity>,
        relations: Vec<Relation>,
        chunks: Vec<Chunk>,
        description_cap: usize,
    ) -> Result<Self, String> {
        let mut kb = GraphKb::with_description_cap(description_cap);
        for (i, c) in chunks.iter().enumerate() {
            if c.chunk_id.index() != i {
                return Err(format!("chunk id {} out of sequence at row {i}", c.chunk_id));
            }
            if !kb.chunk_positions.insert((c.doc_id.clone(), c.ordinal)) {
                return Err(format!("duplicate chunk position ({}, {})", c.doc_id, c.ordinal));
            }
        }
        kb.chunks = chunks;
        for (i, e) in entities.iter().enumerate() {
            if e.entity_id.index() != i {
                return Err(format!("entity id {} out of sequence at row {i}", e.entity_id));
            }
            if kb
                .name_index
                .insert(normalize_name(&e.name), e.entity_id)
                .is_some()
            {
                return Err(format!("duplicate entity name {:?}", e.name));
            }
        }
        kb.adjacency = vec![BTreeSet::new(); entities.len()];
        kb.entities = entities;
        for (i, r) in relations.iter().enumerate() {
            if r.relation_id.index() != i {
                return Err(format!("relation id {} out of sequence at row {i}", r.relation_id));
            }
            for end in [r.head_entity_id, r.tail_entity_id] {
                let Some(adj) = kb.adjacency.get_mut(end.index()) else {
                    return Err(format!("relation {} references missing entity {end}", r.relation_id));
                };
                adj.insert(r.relation_id);
            }
        }
        kb.relations = relations;
        kb.audit().map_err(|p| p.join("; "))?;
        Ok(kb)
    }
}

fn merge_description(existing: &mut String, incoming: &str, cap: usize) {
    let incoming = incoming.trim();
    if incoming.is_empty() || existing.split(DESCRIPTION_SEPARATOR).any(|s| s == incoming) {
        return;
    }
    if !existing.is_empty() {
        existing.push_str(DESCRIPTION_SEPARATOR);
    }
    existing.push_str(incoming);
    if let Some((byte, _)) = existing.char_indices().nth(cap) {
        existing.truncate(byte);
    }
}
