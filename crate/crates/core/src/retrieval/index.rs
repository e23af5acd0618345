//! Exact (flat) cosine index and its binary sidecar format.
//!
//! Sidecar layout, little-endian:
//!
//! ```text
//! magic "KGSV" | version u16 | scalar width u16 (4 or 8) | dimension u32 | count u64
//! count x ( id u64 | dimension x scalar )
//! ```

use std::fs;
use std::path::Path;

use crate::kb::StoreError;
use crate::scalar::{sort_ranked, Scalar};

use super::embed::{dot, EmbedError, Embedding};

const MAGIC: &[u8; 4] = b"KGSV";
const SIDECAR_VERSION: u16 = 1;
const HEADER_LEN: usize = 20;

#[derive(Debug, Clone, PartialEq)]
pub struct FlatIndex<S> {
    dimension: usize,
    ids: Vec<u64>,
    values: Vec<S>,
}

impl<S: Scalar> FlatIndex<S> {
    pub fn new(dimension: usize) -> Self {
        Self {
            dimension,
            ids: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[u64] {
        &self.ids
    }

    pub fn insert(&mut self, id: u64, embedding: &Embedding<S>) -> Result<(), EmbedError> {
        if embedding.dimension() != self.dimension {
            return Err(EmbedError::Dimension {
                expected: self.dimension,
                got: embedding.dimension(),
            });
        }
        self.ids.push(id);
        self.values.extend_from_slice(embedding.values());
        Ok(())
    }

    pub fn vector(&self, slot: usize) -> &[S] {
        &self.values[slot * self.dimension..(slot + 1) * self.dimension]
    }

    /// Similarity of `query` to every stored vector, in ranking order.
    pub fn rank_all(&self, query: &Embedding<S>) -> Vec<(u64, S)> {
        let mut scored: Vec<(u64, S)> = self
            .ids
            .iter()
            .enumerate()
            .map(|(slot, id)| (*id, dot(query.values(), self.vector(slot))))
            .collect();
        sort_ranked(&mut scored, |t| (t.1, t.0));
        scored
    }

    /// Top `k` by cosine (stored vectors are unit length or zero), ties by id.
    pub fn search(&self, query: &Embedding<S>, k: usize) -> Result<Vec<(u64, S)>, EmbedError> {
        if query.dimension() != self.dimension {
            return Err(EmbedError::Dimension {
                expected: self.dimension,
                got: query.dimension(),
            });
        }
        let mut ranked = self.rank_all(query);
        ranked.truncate(k);
        Ok(ranked)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let width = std::mem::size_of::<S>();
        let mut out = Vec::with_capacity(HEADER_LEN + self.ids.len() * (8 + self.dimension * width));
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&SIDECAR_VERSION.to_le_bytes());
        out.extend_from_slice(&(width as u16).to_le_bytes());
        out.extend_from_slice(&(self.dimension as u32).to_le_bytes());
        out.extend_from_slice(&(self.ids.len() as u64).to_le_bytes());
        for slot in 0..self.ids.len() {
            out.extend_from_slice(&self.ids[slot].to_le_bytes());
            for v in self.vector(slot) {
                if width == 4 {
                    out.extend_from_slice(&(v.to_f64_lossy() as f32).to_le_bytes());
                } else {
                    out.extend_from_slice(&v.to_f64_lossy().to_le_bytes());
                }
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], file: &Path) -> Result<Self, StoreError> {
        let corrupt = |reason: &str| StoreError::corrupt(file, 0, reason);
        if bytes.len() < HEADER_LEN {
            return Err(corrupt("sidecar header truncated"));
        }
        if &bytes[0..4] != MAGIC {
            return Err(corrupt("sidecar magic mismatch"));
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != SIDECAR_VERSION {
            return Err(StoreError::VersionMismatch {
                file: file.to_path_buf(),
                found: u32::from(version),
                expected: u32::from(SIDECAR_VERSION),
            });
        }
        let width = u16::from_le_bytes([bytes[6], bytes[7]]) as usize;
        if width != 4 && width != 8 {
            return Err(corrupt("unsupported scalar width"));
        }
        let dimension = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let count = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
        let record = 8 + dimension * width;
        if bytes.len() != HEADER_LEN + count * record {
            return Err(corrupt(&format!(
                "expected {} bytes for {count} records, found {}",
                HEADER_LEN + count * record,
                bytes.len()
            )));
        }
        let mut index = FlatIndex::new(dimension);
        index.ids.reserve(count);
        index.values.reserve(count * dimension);
        for r in 0..count {
            let base = HEADER_LEN + r * record;
            index
                .ids
                .push(u64::from_le_bytes(bytes[base..base + 8].try_into().unwrap()));
            for d in 0..dimension {
                let at = base + 8 + d * width;
                let v = if width == 4 {
                    f64::from(f32::from_le_bytes(bytes[at..at + 4].try_into().unwrap()))
                } else {
                    f64::from_le_bytes(bytes[at..at + 8].try_into().unwrap())
                };
                index.values.push(S::from_f64_lossy(v));
            }
        }
        Ok(index)
    }

    pub fn save(&self, path: &Path) -> Result<(), StoreError> {
        fs::write(path, self.to_bytes()).map_err(|e| StoreError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self, StoreError> {
        let bytes = fs::read(path).map_err(|e| StoreError::io(path, e))?;
        Self::from_bytes(&bytes, path)
    }
}
