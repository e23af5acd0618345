//! Prompt template registry.
//!
//! Placeholders are written `{name}`. Rendering is a single left-to-right
//! pass over the template text, so braces inside binding values are copied
//! verbatim and never re-expanded.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{ChatMessage, LlmError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateId {
    QdSemantic,
    QdRelational,
    ContextRefine,
    QueryGround,
    AnswerSubquery,
    LogicDraft,
    EvidenceVerify,
    QueryExpand,
    FinalAnswer,
    Extract,
    JudgeAnswer,
    JudgeEvidence,
}

impl TemplateId {
    pub const ALL: [TemplateId; 12] = [
        TemplateId::QdSemantic,
        TemplateId::QdRelational,
        TemplateId::ContextRefine,
        TemplateId::QueryGround,
        TemplateId::AnswerSubquery,
        TemplateId::LogicDraft,
        TemplateId::EvidenceVerify,
        TemplateId::QueryExpand,
        TemplateId::FinalAnswer,
        TemplateId::Extract,
        TemplateId::JudgeAnswer,
        TemplateId::JudgeEvidence,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TemplateId::QdSemantic => "qd_semantic",
            TemplateId::QdRelational => "qd_relational",
            TemplateId::ContextRefine => "context_refine",
            TemplateId::QueryGround => "query_ground",
            TemplateId::AnswerSubquery => "answer_subquery",
            TemplateId::LogicDraft => "logic_draft",
            TemplateId::EvidenceVerify => "evidence_verify",
            TemplateId::QueryExpand => "query_expand",
            TemplateId::FinalAnswer => "final_answer",
            TemplateId::Extract => "extract",
            TemplateId::JudgeAnswer => "judge_answer",
            TemplateId::JudgeEvidence => "judge_evidence",
        }
    }

    pub fn template(self) -> PromptTemplate {
        let (system, body) = match self {
            TemplateId::QdSemantic => (SYSTEM_SEARCH, QD_SEMANTIC),
            TemplateId::QdRelational => (SYSTEM_SEARCH, QD_RELATIONAL),
            TemplateId::ContextRefine => (SYSTEM_SEARCH, CONTEXT_REFINE),
            TemplateId::QueryGround => (SYSTEM_SEARCH, QUERY_GROUND),
            TemplateId::AnswerSubquery => (SYSTEM_ANSWER, ANSWER_SUBQUERY),
            TemplateId::LogicDraft => (SYSTEM_REFLECT, LOGIC_DRAFT),
            TemplateId::EvidenceVerify => (SYSTEM_REFLECT, EVIDENCE_VERIFY),
            TemplateId::QueryExpand => (SYSTEM_REFLECT, QUERY_EXPAND),
            TemplateId::FinalAnswer => (SYSTEM_ANSWER, FINAL_ANSWER),
            TemplateId::Extract => (SYSTEM_EXTRACT, EXTRACT),
            TemplateId::JudgeAnswer => (SYSTEM_JUDGE, JUDGE_ANSWER),
            TemplateId::JudgeEvidence => (SYSTEM_JUDGE, JUDGE_EVIDENCE),
        };
        PromptTemplate::new(self, system, body)
    }
}

impl fmt::Display for TemplateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TemplateId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TemplateId::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| format!("unknown template id {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    pub template_id: TemplateId,
    pub system: &'static str,
    pub body: &'static str,
    pub required_bindings: BTreeSet<&'static str>,
}

enum Piece<'a> {
    Text(&'a str),
    Slot(&'a str),
}

fn pieces(text: &str) -> Vec<Piece<'_>> {
    let mut out = Vec::new();
    let mut rest = text;
    while let Some(open) = rest.find('{') {
        let after = &rest[open + 1..];
        let close = after.find('}');
        let name = close.map(|c| &after[..c]);
        match name {
            Some(n) if !n.is_empty() && n.chars().all(|c| c.is_ascii_lowercase() || c == '_') => {
                out.push(Piece::Text(&rest[..open]));
                out.push(Piece::Slot(n));
                rest = &after[n.len() + 1..];
            }
            _ => {
                out.push(Piece::Text(&rest[..open + 1]));
                rest = after;
            }
        }
    }
    out.push(Piece::Text(rest));
    out
}

impl PromptTemplate {
    pub fn new(template_id: TemplateId, system: &'static str, body: &'static str) -> Self {
        let required_bindings = pieces(system)
            .into_iter()
            .chain(pieces(body))
            .filter_map(|p| match p {
                Piece::Slot(n) => Some(n),
                Piece::Text(_) => None,
            })
            .collect();
        Self {
            template_id,
            system,
            body,
            required_bindings,
        }
    }

    fn fill(&self, text: &str, bindings: &[(&str, &str)]) -> String {
        let mut out = String::with_capacity(text.len());
        for piece in pieces(text) {
            match piece {
                Piece::Text(t) => out.push_str(t),
                Piece::Slot(name) => {
                    let value = bindings
                        .iter()
                        .find(|(k, _)| *k == name)
                        .map(|(_, v)| *v)
                        .expect("bindings checked before fill");
                    out.push_str(value);
                }
            }
        }
        out
    }

    pub fn render(&self, bindings: &[(&str, &str)]) -> Result<Vec<ChatMessage>, LlmError> {
        for required in &self.required_bindings {
            if !bindings.iter().any(|(k, _)| k == required) {
                return Err(LlmError::MissingBinding {
                    template: self.template_id,
                    name: (*required).to_string(),
                });
            }
        }
        Ok(vec![
            ChatMessage::system(self.fill(self.system, bindings)),
            ChatMessage::user(self.fill(self.body, bindings)),
        ])
    }
}

/// Renders `template_id` into a system + user message pair.
pub fn render_prompt(template_id: TemplateId, bindings: &[(&str, &str)]) -> Result<Vec<ChatMessage>, LlmError> {
    template_id.template().render(bindings)
}

const SYSTEM_SEARCH: &str = "You are the query planner of a retrieval system over a graph knowledge base built from documents. Follow the output format exactly.";
const SYSTEM_ANSWER: &str = "You answer questions strictly from the supplied evidence. Be brief and factual.";
const SYSTEM_REFLECT: &str = "You review multi-step reasoning over retrieved evidence and decide whether it supports an answer. Follow the output format exactly.";
const SYSTEM_EXTRACT: &str = "You extract entities and relations from text for a knowledge graph. Follow the output format exactly.";
const SYSTEM_JUDGE: &str = "You are a strict evaluator of question answering outputs. Follow the output format exactly.";

const QD_SEMANTIC: &str = "Decompose the question into at most {max_items} atomic sub-queries for searching a text corpus.
Each sub-query asks about exactly one fact (a single entity, relation or contextual detail) and is phrased as a natural-language question.
Order the sub-queries so that the answers of earlier ones can be used by later ones. When a sub-query depends on the answer of sub-query n, write the placeholder Entity#n in its place.
Output only a numbered list with one sub-query per line, for example:
1. Who painted The Worship of Venus?
2. Where did Entity#1 die?

Question: {question}";

const QD_RELATIONAL: &str = "Decompose the question into at most {max_items} relational sub-queries for searching a knowledge graph of entities and relations.
Write each sub-query as a subject - predicate - object triple with exactly one unknown element, marked ?. Refer to the unknown resolved by sub-query n as Entity#n.
Output only a numbered list with one triple per line, for example:
1. The Worship of Venus - created by - ?
2. Entity#1 - died in - ?

Question: {question}";

const CONTEXT_REFINE: &str = "Select the candidate items that help answer the query. Drop redundant and irrelevant items.

Query: {query}

Candidates:
{candidates}

Reply with one line of the form
KEEP: <comma-separated candidate numbers>
or KEEP: NONE when no candidate helps.";

const QUERY_GROUND: &str = "Rewrite the query so that it is fully specified. Replace every placeholder (Entity#n) and every reference to an earlier result with the concrete answer from the resolved sub-queries. Add nothing else.

Resolved sub-queries:
{history}

Query: {query}

Output only the rewritten query on one line.";

const ANSWER_SUBQUERY: &str = "Answer the query using only the context. Reply with a short answer: an entity, date, number or short phrase. Reply UNKNOWN if the context does not contain the answer.

Context:
{context}

Query: {query}";

const LOGIC_DRAFT: &str = "Organise the evidence into a step-by-step reasoning chain that connects the sub-query answers to the question.

Question: {question}

Evidence:
{evidence}

Write one line per reasoning step:
STEP: <claim> [<comma-separated ids of the supporting sub-queries>]
and one line per missing or inconsistent link:
MISSING: <the evidence that is missing>";

const EVIDENCE_VERIFY: &str = "Check the reasoning draft against the evidence: every claim must be grounded in retrieved context, the chain must be coherent and free of contradictions, and it must answer the question.

Question: {question}

Evidence:
{evidence}

Draft:
{draft}

If the evidence is sufficient, reply with the single line ACCEPT.
Otherwise reply REJECT on the first line, followed by one line per missing point starting with \"- \".";

const QUERY_EXPAND: &str = "The evidence does not yet support an answer. Write at most {max_items} new sub-queries that target exactly the missing evidence.

Question: {question}

Evidence:
{evidence}

Draft:
{draft}

Missing points:
{missing}

Write one sub-query per line. Prefix a question over text passages with \"S: \" and a subject - predicate - object triple over the knowledge graph with \"R: \".";

const FINAL_ANSWER: &str = "Answer the question from the retrieved context, the intermediate answers and the reasoning draft.

Question: {question}

Context:
{context}

Intermediate answers:
{answers}

Reasoning draft:
{draft}

Reply with the answer only, as short as possible.";

const EXTRACT: &str = "Extract the entities and relations mentioned in the text.

Text:
{text}

Output one record per line and nothing else:
E|<entity name>|<key=value;key=value>|<one-sentence description>
R|<head entity name>|<tail entity name>|<key=value;key=value>|<one-sentence description of the relation>
Every entity named in an R record must have an E record. Leave the property field empty when there are none. Output NONE when the text names no entities.";

const JUDGE_ANSWER: &str = "Score the response against the golden answer on three criteria, each an integer from 0 to 10, in this order: correctness, logical coherence, comprehensiveness.

Question: {question}
Golden answer: {golden_answer}
Response: {prediction}

Reply with exactly three comma-separated integers, for example 7,8,6";

const JUDGE_EVIDENCE: &str = "Score how well the response is grounded in the golden evidence on three criteria, each an integer from 0 to 10, in this order: relevance, knowledgeability, factuality.

Question: {question}
Golden evidence:
{golden_evidence}
Response: {prediction}

Reply with exactly three comma-separated integers, for example 7,8,6";
