//! Line-delimited event log of one search run.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::llm::{TemplateId, Transcript, TranscriptEntry};
use crate::retrieval::{merge_contexts, ContextIds, RetrievalMode, RetrievedContext};
use crate::scalar::Scalar;

use super::{
    EvidenceRecord, LogicDraft, Module, RunStatus, SearchConfig, SubQuery, Verdict, VerificationDecision,
};

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("{file}: {source}")]
    Io {
        file: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{file}: corrupt trace at line {line} (byte offset {offset}): {reason}")]
    Corrupt {
        file: String,
        line: usize,
        offset: usize,
        reason: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type", content = "payload")]
#[serde(bound = "S: Scalar")]
pub enum TraceEventKind<S> {
    RunStarted {
        question: String,
        mode: String,
        config: SearchConfig,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        golden_evidence: Option<Vec<String>>,
    },
    LlmCall {
        module: Module,
        template: TemplateId,
        ordinal: u32,
        prompt_digest: String,
        response: String,
    },
    Decomposition {
        sub_queries: Vec<SubQuery>,
    },
    Grounding {
        sq_id: String,
        before: String,
        after: String,
        llm: bool,
    },
    Retrieval {
        sq_id: String,
        mode: RetrievalMode,
        k: usize,
        ids: ContextIds,
    },
    /// One pool append; the unit of the recall-by-step axis.
    Evidence {
        step: usize,
        record: EvidenceRecord<S>,
        merged: ContextIds,
    },
    Draft {
        draft: LogicDraft,
    },
    Verification {
        decision: VerificationDecision,
    },
    Expansion {
        sub_queries: Vec<SubQuery>,
    },
    Flag {
        module: Module,
        message: String,
    },
    Final {
        answer: String,
        status: RunStatus,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        recall_by_step: Option<Vec<f64>>,
    },
    Aborted {
        error: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct TraceEvent<S> {
    pub seq: u64,
    pub round: u32,
    #[serde(flatten)]
    pub kind: TraceEventKind<S>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct SearchTrace<S> {
    pub events: Vec<TraceEvent<S>>,
}

impl<S> Default for SearchTrace<S> {
    fn default() -> Self {
        Self { events: Vec::new() }
    }
}

impl<S: Scalar> SearchTrace<S> {
    pub fn push(&mut self, round: u32, kind: TraceEventKind<S>) {
        let seq = self.events.len() as u64;
        self.events.push(TraceEvent { seq, round, kind });
    }

    pub fn to_jsonl(&self) -> String {
        self.events
            .iter()
            .map(|e| serde_json::to_string(e).expect("trace events serialize") + "\n")
            .collect()
    }

    pub fn parse(text: &str, file: &str) -> Result<Self, TraceError> {
        let corrupt = |line: usize, offset: usize, reason: String| TraceError::Corrupt {
            file: file.to_string(),
            line,
            offset,
            reason,
        };
        let mut events = Vec::new();
        let mut offset = 0;
        for (i, line) in text.split_inclusive('\n').enumerate() {
            let body = line.trim_end_matches(['\n', '\r']);
            if !body.trim().is_empty() {
                let event: TraceEvent<S> =
                    serde_json::from_str(body).map_err(|e| corrupt(i + 1, offset, e.to_string()))?;
                if event.seq != events.len() as u64 {
                    return Err(corrupt(
                        i + 1,
                        offset,
                        format!("expected seq {}, found {}", events.len(), event.seq),
                    ));
                }
                events.push(event);
            }
            offset += line.len();
        }
        if events.is_empty() {
            return Err(corrupt(0, 0, "trace is empty".into()));
        }
        if !matches!(events[0].kind, TraceEventKind::RunStarted { .. }) {
            return Err(corrupt(1, 0, "first event is not run_started".into()));
        }
        Ok(Self { events })
    }

    pub fn load(path: &Path) -> Result<Self, TraceError> {
        let file = path.display().to_string();
        let text = fs::read_to_string(path).map_err(|source| TraceError::Io {
            file: file.clone(),
            source,
        })?;
        Self::parse(&text, &file)
    }

    pub fn save(&self, path: &Path) -> Result<(), TraceError> {
        fs::write(path, self.to_jsonl()).map_err(|source| TraceError::Io {
            file: path.display().to_string(),
            source,
        })
    }

    pub fn question(&self) -> Option<&str> {
        self.events.iter().find_map(|e| match &e.kind {
            TraceEventKind::RunStarted { question, .. } => Some(question.as_str()),
            _ => None,
        })
    }

    pub fn golden_evidence(&self) -> Option<&[String]> {
        self.events.iter().find_map(|e| match &e.kind {
            TraceEventKind::RunStarted { golden_evidence, .. } => golden_evidence.as_deref(),
            _ => None,
        })
    }

    pub fn final_answer(&self) -> Option<(&str, RunStatus)> {
        self.events.iter().rev().find_map(|e| match &e.kind {
            TraceEventKind::Final { answer, status, .. } => Some((answer.as_str(), *status)),
            _ => None,
        })
    }

    pub fn llm_call_count(&self) -> usize {
        self.count(|k| matches!(k, TraceEventKind::LlmCall { .. }))
    }

    pub fn retrieval_call_count(&self) -> usize {
        self.count(|k| matches!(k, TraceEventKind::Retrieval { .. }))
    }

    pub fn count(&self, pred: impl Fn(&TraceEventKind<S>) -> bool) -> usize {
        self.events.iter().filter(|e| pred(&e.kind)).count()
    }

    pub fn evidence_records(&self) -> impl Iterator<Item = (u32, &EvidenceRecord<S>)> {
        self.events.iter().filter_map(|e| match &e.kind {
            TraceEventKind::Evidence { record, .. } => Some((e.round, record)),
            _ => None,
        })
    }

    /// Merged context after each pool append.
    pub fn merged_snapshots(&self) -> Vec<RetrievedContext<S>> {
        let mut merged = RetrievedContext::default();
        self.evidence_records()
            .map(|(_, record)| {
                merged = merge_contexts(&merged, &record.refined_context);
                merged.clone()
            })
            .collect()
    }

    pub fn verdicts(&self) -> Vec<(u32, Verdict)> {
        self.events
            .iter()
            .filter_map(|e| match &e.kind {
                TraceEventKind::Verification { decision } => Some((e.round, decision.verdict)),
                _ => None,
            })
            .collect()
    }

    /// Number of rounds that retrieved evidence, counting the initial pass.
    pub fn rounds(&self) -> u32 {
        self.evidence_records().map(|(r, _)| r + 1).max().unwrap_or(0)
    }

    /// A transcript that replays this run's model responses; each entry
    /// pins the prompt digest so a strict replay detects divergence.
    pub fn to_transcript(&self) -> Transcript {
        let entries = self
            .events
            .iter()
            .filter_map(|e| match &e.kind {
                TraceEventKind::LlmCall {
                    template,
                    ordinal,
                    prompt_digest,
                    response,
                    ..
                } => {
                    let mut entry = TranscriptEntry::new(*template, *ordinal, response.clone());
                    entry.prompt_digest = Some(prompt_digest.clone());
                    Some(entry)
                }
                _ => None,
            })
            .collect();
        Transcript::new(entries)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn started() -> TraceEventKind<f64> {
        TraceEventKind::RunStarted {
            question: "q".into(),
            mode: "deepsearch".into(),
            config: SearchConfig::default(),
            golden_evidence: None,
        }
    }

    #[test]
    fn jsonl_round_trip() {
        let mut t = SearchTrace::<f64>::default();
        t.push(0, started());
        t.push(
            1,
            TraceEventKind::Verification {
                decision: VerificationDecision::reject(vec!["x".into()]),
            },
        );
        let text = t.to_jsonl();
        assert!(text.lines().next().unwrap().contains("\"type\":\"run_started\""));
        assert_eq!(SearchTrace::parse(&text, "t").unwrap(), t);
    }

    #[test]
    fn empty_and_garbled_traces_are_corrupt() {
        assert!(matches!(SearchTrace::<f64>::parse("", "t"), Err(TraceError::Corrupt { .. })));
        let mut t = SearchTrace::<f64>::default();
        t.push(0, started());
        let good = t.to_jsonl();
        let text = format!("{good}{{broken\n");
        match SearchTrace::<f64>::parse(&text, "t").unwrap_err() {
            TraceError::Corrupt { line, offset, .. } => {
                assert_eq!(line, 2);
                assert_eq!(offset, good.len());
            }
            other => panic!("unexpected {other}"),
        }
    }
}
