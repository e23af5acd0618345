use std::collections::HashMap;
use std::fs;
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{LanguageModel, LlmError, LlmRequest, TemplateId};

#[derive(Debug, Error)]
pub enum TranscriptError {
    #[error("{file}: {source}")]
    Io {
        file: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{file}:{line}: {reason}")]
    Parse {
        file: String,
        line: usize,
        reason: String,
    },
}

/// One scripted response, keyed by template and 1-based call ordinal for
/// that template. An entry without an ordinal answers any call of its
/// template not matched by an exact entry.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub template: TemplateId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ordinal: Option<u32>,
    pub response: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt_digest: Option<String>,
    /// Restricts the entry to runs whose scope (usually the question) matches.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scope: Option<String>,
}

impl TranscriptEntry {
    pub fn new(template: TemplateId, ordinal: u32, response: impl Into<String>) -> Self {
        Self {
            template,
            ordinal: Some(ordinal),
            response: response.into(),
            prompt_digest: None,
            scope: None,
        }
    }

    pub fn any(template: TemplateId, response: impl Into<String>) -> Self {
        Self {
            ordinal: None,
            ..Self::new(template, 0, response)
        }
    }

    pub fn scoped(mut self, scope: impl Into<String>) -> Self {
        self.scope = Some(scope.into());
        self
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Transcript {
    pub entries: Vec<TranscriptEntry>,
}

impl Transcript {
    pub fn new(entries: Vec<TranscriptEntry>) -> Self {
        Self { entries }
    }

    pub fn parse(text: &str, file: &str) -> Result<Self, TranscriptError> {
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() || line.trim_start().starts_with("//") {
                continue;
            }
            let entry = serde_json::from_str(line).map_err(|e| TranscriptError::Parse {
                file: file.to_string(),
                line: i + 1,
                reason: e.to_string(),
            })?;
            entries.push(entry);
        }
        Ok(Self { entries })
    }

    pub fn load(path: &Path) -> Result<Self, TranscriptError> {
        let text = fs::read_to_string(path).map_err(|source| TranscriptError::Io {
            file: path.display().to_string(),
            source,
        })?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn to_jsonl(&self) -> String {
        self.entries
            .iter()
            .map(|e| serde_json::to_string(e).expect("entry serializes") + "\n")
            .collect()
    }

    /// Entries applicable to `scope`; scoped entries take precedence over
    /// unscoped ones with the same key.
    pub fn scoped(&self, scope: &str) -> Transcript {
        let mut entries: Vec<TranscriptEntry> = self
            .entries
            .iter()
            .filter(|e| e.scope.as_deref() == Some(scope))
            .cloned()
            .collect();
        entries.extend(self.entries.iter().filter(|e| e.scope.is_none()).cloned());
        Transcript { entries }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CallRecord {
    pub template: TemplateId,
    pub ordinal: u32,
    pub prompt_digest: String,
}

#[derive(Debug, Default)]
struct Cursor {
    counters: HashMap<TemplateId, u32>,
    log: Vec<CallRecord>,
}

/// Replays a transcript. One instance per run.
#[derive(Debug)]
pub struct ScriptedLlm {
    transcript: Transcript,
    strict: bool,
    cursor: Mutex<Cursor>,
}

impl ScriptedLlm {
    pub fn new(transcript: Transcript) -> Self {
        Self {
            transcript,
            strict: false,
            cursor: Mutex::new(Cursor::default()),
        }
    }

    pub fn from_entries(entries: Vec<TranscriptEntry>) -> Self {
        Self::new(Transcript::new(entries))
    }

    /// In strict mode entries carrying a prompt digest must match the
    /// rendered prompt exactly.
    pub fn strict(mut self, strict: bool) -> Self {
        self.strict = strict;
        self
    }

    pub fn calls(&self) -> Vec<CallRecord> {
        self.cursor.lock().unwrap_or_else(|e| e.into_inner()).log.clone()
    }

    pub fn call_count(&self) -> usize {
        self.cursor.lock().unwrap_or_else(|e| e.into_inner()).log.len()
    }

    fn lookup(&self, template: TemplateId, ordinal: u32) -> Option<&TranscriptEntry> {
        let entries = &self.transcript.entries;
        entries
            .iter()
            .find(|e| e.template == template && e.ordinal == Some(ordinal))
            .or_else(|| entries.iter().find(|e| e.template == template && e.ordinal.is_none()))
    }
}

impl LanguageModel for ScriptedLlm {
    fn complete(&self, request: &LlmRequest) -> Result<String, LlmError> {
        let mut cursor = self.cursor.lock().unwrap_or_else(|e| e.into_inner());
        let ordinal = {
            let c = cursor.counters.entry(request.template).or_insert(0);
            *c += 1;
            *c
        };
        let digest = request.digest();
        cursor.log.push(CallRecord {
            template: request.template,
            ordinal,
            prompt_digest: digest.clone(),
        });
        let entry = self
            .lookup(request.template, ordinal)
            .ok_or(LlmError::TranscriptExhausted {
                template: request.template,
                ordinal,
            })?;
        if self.strict {
            if let Some(expected) = &entry.prompt_digest {
                if *expected != digest {
                    return Err(LlmError::TranscriptMismatch {
                        template: request.template,
                        ordinal,
                        expected: expected.clone(),
                        actual: digest,
                    });
                }
            }
        }
        Ok(entry.response.clone())
    }

    fn identity(&self) -> String {
        "scripted".into()
    }
}
