use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::http::{read_key, HttpError, JsonClient, RetryPolicy};
use crate::scalar::Scalar;

/// Default dimension of the built-in hashing embedder.
pub const HASHING_DIMENSION: usize = 256;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("embedding provider failed: {0}")]
    Remote(#[from] HttpError),
    #[error("embedding dimension {got} does not match index dimension {expected}")]
    Dimension { expected: usize, got: usize },
}

/// Fixed-dimension vector, L2-normalized unless it is all zeros.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding<S> {
    values: Vec<S>,
}

impl<S: Scalar> Embedding<S> {
    /// Normalizes `values`; a zero vector stays zero.
    pub fn normalized(mut values: Vec<S>) -> Self {
        let norm = values.iter().fold(S::zero(), |acc, v| acc + *v * *v).sqrt();
        if norm > S::zero() {
            for v in &mut values {
                *v = *v / norm;
            }
        }
        Self { values }
    }

    pub fn from_normalized(values: Vec<S>) -> Self {
        Self { values }
    }

    pub fn zeros(dimension: usize) -> Self {
        Self {
            values: vec![S::zero(); dimension],
        }
    }

    pub fn dimension(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[S] {
        &self.values
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|v| v.is_zero())
    }

    pub fn norm(&self) -> S {
        self.dot(self).sqrt()
    }

    pub fn dot(&self, other: &Self) -> S {
        dot(&self.values, &other.values)
    }

    /// Cosine similarity; zero when either side is the zero vector.
    pub fn cosine(&self, other: &Self) -> S {
        let denom = self.norm() * other.norm();
        if denom.is_zero() {
            S::zero()
        } else {
            self.dot(other) / denom
        }
    }
}

pub(crate) fn dot<S: Scalar>(a: &[S], b: &[S]) -> S {
    a.iter().zip(b).fold(S::zero(), |acc, (x, y)| acc + *x * *y)
}

pub trait Embedder<S: Scalar>: Send + Sync {
    fn dimension(&self) -> usize;

    /// Stable description recorded in the index manifest.
    fn identity(&self) -> String;

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Embedding<S>>, EmbedError>;

    fn embed(&self, text: &str) -> Result<Embedding<S>, EmbedError> {
        let mut out = self.embed_batch(&[text])?;
        Ok(out.pop().unwrap_or_else(|| Embedding::zeros(self.dimension())))
    }
}

/// Lower-cased alphanumeric tokens.
pub fn tokenize(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| t.to_lowercase())
}

/// 64-bit FNV-1a.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(FNV_OFFSET, |h, b| (h ^ u64::from(*b)).wrapping_mul(FNV_PRIME))
}

/// Network-free deterministic embedder: bag of words feature-hashed with
/// FNV-1a into `dimension` buckets, then L2-normalized.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HashingEmbedder {
    dimension: usize,
}

impl Default for HashingEmbedder {
    fn default() -> Self {
        Self::new(HASHING_DIMENSION)
    }
}

impl HashingEmbedder {
    pub fn new(dimension: usize) -> Self {
        assert!(dimension > 0, "embedding dimension must be positive");
        Self { dimension }
    }

    pub fn bucket(&self, token: &str) -> usize {
        (fnv1a(token.as_bytes()) % self.dimension as u64) as usize
    }

    pub fn embed_one<S: Scalar>(&self, text: &str) -> Embedding<S> {
        let mut counts = vec![S::zero(); self.dimension];
        for token in tokenize(text) {
            let b = self.bucket(&token);
            counts[b] = counts[b] + S::one();
        }
        Embedding::normalized(counts)
    }
}

impl<S: Scalar> Embedder<S> for HashingEmbedder {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn identity(&self) -> String {
        format!("hashing-fnv1a-{}", self.dimension)
    }

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Embedding<S>>, EmbedError> {
        Ok(texts.iter().map(|t| self.embed_one(t)).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RemoteEmbedderConfig {
    /// Full endpoint URL, e.g. `https://host/v1/embeddings`.
    pub url: String,
    pub model: String,
    pub api_key_env: String,
    pub dimension: usize,
    pub batch_size: usize,
    pub max_in_flight: usize,
    pub retry: RetryPolicy,
}

impl Default for RemoteEmbedderConfig {
    fn default() -> Self {
        Self {
            url: "http://localhost:8000/v1/embeddings".into(),
            model: "text-embedding".into(),
            api_key_env: "KGSEARCH_EMBEDDING_API_KEY".into(),
            dimension: 1024,
            batch_size: 64,
            max_in_flight: 4,
            retry: RetryPolicy::default(),
        }
    }
}

#[derive(Serialize)]
struct EmbeddingRequest<'a> {
    model: &'a str,
    input: &'a [&'a str],
}

#[derive(Deserialize)]
struct EmbeddingResponse {
    data: Vec<EmbeddingDatum>,
}

#[derive(Deserialize)]
struct EmbeddingDatum {
    #[serde(default)]
    index: Option<usize>,
    embedding: Vec<f64>,
}

/// Client for OpenAI-style `/embeddings` endpoints.
#[derive(Debug)]
pub struct RemoteEmbedder {
    config: RemoteEmbedderConfig,
    client: JsonClient,
}

impl RemoteEmbedder {
    pub fn new(config: RemoteEmbedderConfig) -> Self {
        let client = JsonClient::new(config.retry.clone(), config.max_in_flight);
        Self { config, client }
    }
}

impl<S: Scalar> Embedder<S> for RemoteEmbedder {
    fn dimension(&self) -> usize {
        self.config.dimension
    }

    fn identity(&self) -> String {
        format!("remote:{}:{}", self.config.model, self.config.dimension)
    }

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Embedding<S>>, EmbedError> {
        let key = read_key(&self.config.api_key_env)?;
        let mut out = vec![Embedding::zeros(self.config.dimension); texts.len()];
        let pending: Vec<usize> = (0..texts.len()).filter(|&i| !texts[i].trim().is_empty()).collect();
        for batch in pending.chunks(self.config.batch_size.max(1)) {
            let input: Vec<&str> = batch.iter().map(|&i| texts[i]).collect();
            let resp: EmbeddingResponse = self.client.post(
                &self.config.url,
                key.as_deref(),
                &EmbeddingRequest {
                    model: &self.config.model,
                    input: &input,
                },
            )?;
            if resp.data.len() != batch.len() {
                return Err(HttpError::Malformed(format!(
                    "expected {} embeddings, got {}",
                    batch.len(),
                    resp.data.len()
                ))
                .into());
            }
            for (pos, datum) in resp.data.into_iter().enumerate() {
                let slot = datum.index.unwrap_or(pos);
                let Some(&target) = batch.get(slot) else {
                    return Err(HttpError::Malformed(format!("embedding index {slot} out of range")).into());
                };
                if datum.embedding.len() != self.config.dimension {
                    return Err(EmbedError::Dimension {
                        expected: self.config.dimension,
                        got: datum.embedding.len(),
                    });
                }
                out[target] =
                    Embedding::normalized(datum.embedding.into_iter().map(S::from_f64_lossy).collect());
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_text_embeds_to_zero() {
        let e: Embedding<f64> = HashingEmbedder::default().embed_one("");
        assert!(e.is_zero());
        assert_eq!(e.dimension(), HASHING_DIMENSION);
    }

    #[test]
    fn embedding_is_deterministic_and_unit_norm() {
        let h = HashingEmbedder::default();
        let a: Embedding<f64> = h.embed_one("alpha beta");
        let b: Embedding<f64> = h.embed_one("alpha beta");
        assert_eq!(a, b);
        assert!((a.norm() - 1.0).abs() < 1e-12);
        assert!((a.cosine(&b) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn embedding_ignores_word_order_and_case() {
        let h = HashingEmbedder::default();
        let a: Embedding<f32> = h.embed_one("Alpha beta");
        let b: Embedding<f32> = h.embed_one("beta, ALPHA!");
        assert_eq!(a, b);
    }

    #[test]
    fn fnv1a_reference_values() {
        assert_eq!(fnv1a(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a(b"a"), 0xaf63dc4c8601ec8c);
        assert_eq!(fnv1a(b"foobar"), 0x85944171f73967e8);
    }

    #[test]
    fn cosine_with_zero_is_zero() {
        let h = HashingEmbedder::default();
        let a: Embedding<f64> = h.embed_one("alpha");
        assert_eq!(a.cosine(&Embedding::zeros(HASHING_DIMENSION)), 0.0);
    }
}
