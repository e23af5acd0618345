use serde::{Deserialize, Serialize};

use super::{Document, IndexError};

/// Splits text into chunking units and joins them back.
pub trait UnitSplitter: Send + Sync {
    fn name(&self) -> &str;

    fn split<'a>(&self, text: &'a str) -> Vec<&'a str>;

    fn join(&self, units: &[&str]) -> String;
}

/// Whitespace-delimited words; the default unit.
#[derive(Debug, Clone, Copy, Default)]
pub struct WordUnits;

impl UnitSplitter for WordUnits {
    fn name(&self) -> &str {
        "word"
    }

    fn split<'a>(&self, text: &'a str) -> Vec<&'a str> {
        text.split_whitespace().collect()
    }

    fn join(&self, units: &[&str]) -> String {
        units.join(" ")
    }
}

/// A chunk before it is assigned a store id.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChunkSpan {
    pub doc_id: String,
    pub ordinal: usize,
    pub unit_start: usize,
    pub unit_count: usize,
    pub text: String,
}

/// Cuts `doc` into windows of `chunk_size` units starting every
/// `chunk_size - overlap` units, until a window would start past the end.
pub fn chunk_document(
    doc: &Document,
    chunk_size: usize,
    overlap: usize,
    splitter: &dyn UnitSplitter,
) -> Result<Vec<ChunkSpan>, IndexError> {
    if chunk_size == 0 || overlap >= chunk_size {
        return Err(IndexError::Config(format!(
            "chunk size {chunk_size} with overlap {overlap}: need size >= 1 and overlap < size"
        )));
    }
    let units = splitter.split(&doc.body);
    if units.is_empty() {
        return Err(IndexError::Chunking {
            doc_id: doc.doc_id.clone(),
            reason: "document body has no units".into(),
        });
    }
    let stride = chunk_size - overlap;
    let spans = (0..units.len())
        .step_by(stride)
        .enumerate()
        .map(|(ordinal, start)| {
            let end = (start + chunk_size).min(units.len());
            ChunkSpan {
                doc_id: doc.doc_id.clone(),
                ordinal,
                unit_start: start,
                unit_count: end - start,
                text: splitter.join(&units[start..end]),
            }
        })
        .collect();
    Ok(spans)
}

/// Concatenates chunk units with the leading overlap of every chunk after
/// the first removed. Equals the document's unit sequence for any output
/// of [`chunk_document`] with the same overlap.
pub fn reconstruct_units(spans: &[ChunkSpan], overlap: usize, splitter: &dyn UnitSplitter) -> Vec<String> {
    let mut out = Vec::new();
    for (i, span) in spans.iter().enumerate() {
        let units = splitter.split(&span.text);
        let skip = if i == 0 { 0 } else { overlap.min(units.len()) };
        out.extend(units[skip..].iter().map(|u| u.to_string()));
    }
    out
}
