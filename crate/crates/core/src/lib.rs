pub mod eval;
pub mod http;
pub mod indexer;
pub mod kb;
pub mod llm;
pub mod pipeline;
pub mod retrieval;
pub mod scalar;

pub use scalar::Scalar;

/// Scalar used by the CLI and the default aliases below.
pub type DefaultScalar = f64;

pub type GraphRetrieverF64 = retrieval::GraphRetriever<f64>;
pub type GraphRetrieverF32 = retrieval::GraphRetriever<f32>;
pub type RetrievedContextF64 = retrieval::RetrievedContext<f64>;
pub type RetrievedContextF32 = retrieval::RetrievedContext<f32>;
pub type EvidencePoolF64 = pipeline::EvidencePool<f64>;
pub type EvidencePoolF32 = pipeline::EvidencePool<f32>;
pub type SearchTraceF64 = pipeline::SearchTrace<f64>;
pub type SearchTraceF32 = pipeline::SearchTrace<f32>;
pub type SearchOutcomeF64 = pipeline::SearchOutcome<f64>;
pub type SearchOutcomeF32 = pipeline::SearchOutcome<f32>;
