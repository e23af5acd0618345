//! Entity and relation extraction backends.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::kb::{Chunk, Property};
use crate::llm::{LanguageModel, LlmRequest, TemplateId};

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractedEntity {
    pub name: String,
    pub properties: Vec<Property>,
    pub description: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractedRelation {
    pub head: String,
    pub tail: String,
    pub properties: Vec<Property>,
    pub description: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractionResult {
    pub entities: Vec<ExtractedEntity>,
    pub relations: Vec<ExtractedRelation>,
}

impl ExtractionResult {
    pub fn is_empty(&self) -> bool {
        self.entities.is_empty() && self.relations.is_empty()
    }
}

/// Extraction output plus a warning when the backend gave up on the chunk.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Extraction {
    pub result: ExtractionResult,
    pub failure: Option<String>,
}

pub trait Extractor: Send + Sync {
    fn identity(&self) -> String;

    fn extract(&self, chunk: &Chunk) -> Extraction;
}

const LEADING_STOPWORDS: &[&str] = &[
    "a", "an", "the", "in", "on", "at", "it", "he", "she", "they", "we", "this", "that", "these",
    "those", "his", "her", "its", "their", "there", "when", "where", "after", "before", "during",
    "since", "both", "however", "also", "then", "while", "as", "by", "for", "from", "of", "to",
    "with", "i", "if", "but", "and", "or",
];

const CONNECTIVES: &[&str] = &[
    "is", "was", "are", "were", "be", "been", "has", "had", "have", "located", "lies", "lie",
    "died", "born", "created", "painted", "wrote", "written", "founded", "became", "becomes",
    "serves", "served", "licensed", "seat", "capital", "part", "member", "married", "joined",
    "won", "contains", "includes", "owned", "owns", "built", "named", "moved", "struck",
    "occurred", "directed", "produced", "published", "belongs", "borders", "flows", "leads",
    "led", "holds", "held", "hosts", "hosted", "created", "established", "succeeded",
];

/// Splits at `.`, `!` or `?` followed by whitespace or end of text.
fn sentences(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut start = 0;
    let bytes = text.as_bytes();
    for (i, c) in text.char_indices() {
        if matches!(c, '.' | '!' | '?') {
            let next = bytes.get(i + 1).copied();
            if next.is_none() || next.is_some_and(|b| b.is_ascii_whitespace()) {
                let s = text[start..=i].trim();
                if !s.is_empty() {
                    out.push(s);
                }
                start = i + 1;
            }
        }
    }
    let tail = text[start..].trim();
    if !tail.is_empty() {
        out.push(tail);
    }
    out
}

struct Token<'a> {
    word: &'a str,
    /// Punctuation trailing the word breaks a capitalized run.
    breaks: bool,
}

fn tokens(sentence: &str) -> Vec<Token<'_>> {
    sentence
        .split_whitespace()
        .filter_map(|raw| {
            let trimmed_end = raw.trim_end_matches(|c: char| !c.is_alphanumeric());
            let word = trimmed_end.trim_start_matches(|c: char| !c.is_alphanumeric());
            (!word.is_empty()).then_some(Token {
                word,
                breaks: trimmed_end.len() != raw.len(),
            })
        })
        .collect()
}

fn capitalized(word: &str) -> bool {
    word.chars().next().is_some_and(|c| c.is_uppercase())
}

struct Span {
    name: String,
    first: usize,
    last: usize,
}

fn entity_spans(toks: &[Token<'_>]) -> Vec<Span> {
    let mut spans = Vec::new();
    let mut i = 0;
    while i < toks.len() {
        if !capitalized(toks[i].word) {
            i += 1;
            continue;
        }
        let start = i;
        let mut end = i;
        while !toks[end].breaks && end + 1 < toks.len() {
            let next = &toks[end + 1];
            if capitalized(next.word) {
                end += 1;
            } else if next.word == "of"
                && !next.breaks
                && end + 2 < toks.len()
                && capitalized(toks[end + 2].word)
            {
                end += 2;
            } else {
                break;
            }
        }
        let mut first = start;
        while first <= end && LEADING_STOPWORDS.contains(&toks[first].word.to_lowercase().as_str()) {
            first += 1;
        }
        if first <= end {
            let name = toks[first..=end].iter().map(|t| t.word).collect::<Vec<_>>().join(" ");
            spans.push(Span { name, first, last: end });
        }
        i = end + 1;
    }
    spans
}

/// Deterministic pattern extractor. Entities are runs of capitalized words
/// (optionally joined by "of"), minus leading function words. Consecutive
/// entities in a sentence are related when the words between them contain
/// a connective verb; the sentence becomes the relation description.
#[derive(Debug, Clone, Copy, Default)]
pub struct RuleBasedExtractor;

impl RuleBasedExtractor {
    pub fn extract_text(&self, text: &str) -> ExtractionResult {
        let mut result = ExtractionResult::default();
        for sentence in sentences(text) {
            let toks = tokens(sentence);
            let spans = entity_spans(&toks);
            for span in &spans {
                if !result.entities.iter().any(|e| e.name == span.name) {
                    result.entities.push(ExtractedEntity {
                        name: span.name.clone(),
                        properties: Vec::new(),
                        description: sentence.to_string(),
                    });
                }
            }
            for pair in spans.windows(2) {
                let between = &toks[pair[0].last + 1..pair[1].first];
                let has_connective = between
                    .iter()
                    .any(|t| CONNECTIVES.contains(&t.word.to_lowercase().as_str()));
                if has_connective {
                    let predicate = between.iter().map(|t| t.word).collect::<Vec<_>>().join(" ");
                    result.relations.push(ExtractedRelation {
                        head: pair[0].name.clone(),
                        tail: pair[1].name.clone(),
                        properties: vec![("predicate".into(), predicate)],
                        description: sentence.to_string(),
                    });
                }
            }
        }
        result
    }
}

impl Extractor for RuleBasedExtractor {
    fn identity(&self) -> String {
        "rule-based-v1".into()
    }

    fn extract(&self, chunk: &Chunk) -> Extraction {
        Extraction {
            result: self.extract_text(&chunk.text),
            failure: None,
        }
    }
}

fn parse_properties(field: &str) -> Vec<Property> {
    field
        .split(';')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(|p| match p.split_once('=') {
            Some((k, v)) => (k.trim().to_string(), v.trim().to_string()),
            None => (p.to_string(), String::new()),
        })
        .collect()
}

/// Parses the line-delimited record grammar of the `extract` template:
/// `E|name|props|desc` and `R|head|tail|props|desc`, or `NONE`.
pub fn parse_extraction(text: &str) -> Result<ExtractionResult, String> {
    let mut result = ExtractionResult::default();
    let mut saw_none = false;
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if line.eq_ignore_ascii_case("none") {
            saw_none = true;
            continue;
        }
        if let Some(rest) = line.strip_prefix("E|") {
            let fields: Vec<&str> = rest.splitn(3, '|').collect();
            if fields.len() != 3 || fields[0].trim().is_empty() {
                return Err(format!("line {}: malformed entity record", n + 1));
            }
            result.entities.push(ExtractedEntity {
                name: fields[0].trim().to_string(),
                properties: parse_properties(fields[1]),
                description: fields[2].trim().to_string(),
            });
        } else if let Some(rest) = line.strip_prefix("R|") {
            let fields: Vec<&str> = rest.splitn(4, '|').collect();
            if fields.len() != 4 || fields[0].trim().is_empty() || fields[1].trim().is_empty() {
                return Err(format!("line {}: malformed relation record", n + 1));
            }
            result.relations.push(ExtractedRelation {
                head: fields[0].trim().to_string(),
                tail: fields[1].trim().to_string(),
                properties: parse_properties(fields[2]),
                description: fields[3].trim().to_string(),
            });
        }
    }
    if result.is_empty() && !saw_none {
        return Err("no records found".into());
    }
    Ok(result)
}

/// Extractor backed by the `extract` prompt template.
pub struct LlmExtractor {
    llm: Arc<dyn LanguageModel>,
    attempts: u32,
}

impl LlmExtractor {
    pub fn new(llm: Arc<dyn LanguageModel>, attempts: u32) -> Self {
        Self {
            llm,
            attempts: attempts.max(1),
        }
    }
}

impl Extractor for LlmExtractor {
    fn identity(&self) -> String {
        format!("llm:{}", self.llm.identity())
    }

    fn extract(&self, chunk: &Chunk) -> Extraction {
        let request = match LlmRequest::render(TemplateId::Extract, &[("text", &chunk.text)]) {
            Ok(r) => r,
            Err(e) => {
                return Extraction {
                    result: ExtractionResult::default(),
                    failure: Some(e.to_string()),
                }
            }
        };
        let mut last = String::new();
        for attempt in 1..=self.attempts {
            match self.llm.complete(&request) {
                Ok(text) => match parse_extraction(&text) {
                    Ok(result) => return Extraction { result, failure: None },
                    Err(e) => last = format!("attempt {attempt}: unparseable response: {e}"),
                },
                Err(e) => last = format!("attempt {attempt}: {e}"),
            }
            log::warn!("extraction of chunk {} failed: {last}", chunk.chunk_id);
        }
        Extraction {
            result: ExtractionResult::default(),
            failure: Some(last),
        }
    }
}
