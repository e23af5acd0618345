//! Dual-channel retrieval over a [`GraphKb`](crate::kb::GraphKb).
//!
//! * semantic: chunks ranked by cosine against the query
//! * relational: entities and relations ranked by cosine, then expanded
//!   along the graph with a per-hop score decay
//! * hybrid: the union of both
//!
//! Search is exact over flat indexes; ties break by ascending id.

mod context;
mod embed;
mod index;
mod retriever;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use context::{merge_contexts, ContextIds, Keyed, RetrievedContext, Scored};
pub use embed::{
    fnv1a, tokenize, EmbedError, Embedder, Embedding, HashingEmbedder, RemoteEmbedder,
    RemoteEmbedderConfig, HASHING_DIMENSION,
};
pub use index::FlatIndex;
pub use retriever::{entity_text, relation_text, GraphRetriever, RetrievalIndex};

use crate::kb::{GraphKb, KbError};
use crate::scalar::Scalar;

pub const DEFAULT_TOP_K: usize = 30;
pub const DEFAULT_HOP_EXPANSION: usize = 1;
pub const DEFAULT_HOP_DECAY: f64 = 0.5;

#[derive(Debug, Error)]
pub enum RetrievalError {
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Kb(#[from] KbError),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RetrievalMode {
    Semantic,
    Relational,
    Hybrid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetrieverConfig {
    pub top_k: usize,
    pub mode: RetrievalMode,
    pub hop_expansion: usize,
    pub hop_decay: f64,
}

impl Default for RetrieverConfig {
    fn default() -> Self {
        Self {
            top_k: DEFAULT_TOP_K,
            mode: RetrievalMode::Hybrid,
            hop_expansion: DEFAULT_HOP_EXPANSION,
            hop_decay: DEFAULT_HOP_DECAY,
        }
    }
}

impl RetrieverConfig {
    pub fn validate(&self) -> Result<(), RetrievalError> {
        if self.top_k == 0 {
            return Err(RetrievalError::InvalidArgument("top_k must be at least 1".into()));
        }
        if !(self.hop_decay.is_finite() && self.hop_decay >= 0.0) {
            return Err(RetrievalError::InvalidArgument("hop_decay must be finite and non-negative".into()));
        }
        Ok(())
    }
}

/// The graph KB retriever as seen by the search pipeline.
pub trait Retriever<S: Scalar>: Send + Sync {
    fn kb(&self) -> &GraphKb;

    fn config(&self) -> &RetrieverConfig;

    /// Chunks only.
    fn semantic_retrieve(&self, query: &str, k: usize) -> Result<RetrievedContext<S>, RetrievalError>;

    /// Entities and relations only.
    fn relational_retrieve(
        &self,
        query: &str,
        k: usize,
        hop_expansion: usize,
    ) -> Result<RetrievedContext<S>, RetrievalError>;

    fn hybrid_retrieve(&self, query: &str, k: usize) -> Result<RetrievedContext<S>, RetrievalError> {
        let semantic = self.semantic_retrieve(query, k)?;
        let relational = self.relational_retrieve(query, k, self.config().hop_expansion)?;
        Ok(merge_contexts(&semantic, &relational))
    }

    fn retrieve(&self, query: &str, k: usize, mode: RetrievalMode) -> Result<RetrievedContext<S>, RetrievalError> {
        match mode {
            RetrievalMode::Semantic => self.semantic_retrieve(query, k),
            RetrievalMode::Relational => self.relational_retrieve(query, k, self.config().hop_expansion),
            RetrievalMode::Hybrid => self.hybrid_retrieve(query, k),
        }
    }
}
