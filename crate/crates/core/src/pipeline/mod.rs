//! The deep-search agent: decomposition, per-sub-query grounding, retrieval,
//! refinement and answering, then draft/verify/expand reflection rounds.

mod engine;
mod parse;
mod trace;

use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::llm::LlmError;
use crate::retrieval::{ContextIds, RetrievalError, RetrievalMode, RetrievedContext, DEFAULT_TOP_K};
use crate::scalar::Scalar;

pub use engine::{baseline_config, run_deep_search, SearchFailure, SearchOutcome, SearchRequest, SearchSession};
pub use parse::{
    parse_expansion, parse_keep_indices, parse_logic_draft, parse_verification, KeepList,
};
pub use trace::{SearchTrace, TraceError, TraceEvent, TraceEventKind};

pub const DEFAULT_MAX_ROUNDS: u32 = 2;
pub const DEFAULT_MAX_SUBQUERIES: usize = 6;
pub const DEFAULT_MAX_EXPANSION: usize = 3;
/// Items kept when a refinement response selects nothing usable.
pub const REFINE_FALLBACK_ITEMS: usize = 5;
pub const UNKNOWN_ANSWER: &str = "UNKNOWN";
pub const VERIFY_UNPARSEABLE: &str = "verification unparseable";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid search configuration: {0}")]
    Config(String),
    #[error("{op}: precondition violated: {reason}")]
    Precondition { op: &'static str, reason: String },
    #[error("{module}: {source}")]
    Llm {
        module: Module,
        #[source]
        source: LlmError,
    },
    #[error("retrieval for {sq_id}: {source}")]
    Retrieval {
        sq_id: String,
        #[source]
        source: RetrievalError,
    },
}

/// The six agent modules plus the answer generators, for trace attribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Module {
    Decomposition,
    Refinement,
    Grounding,
    SubAnswer,
    Drafting,
    Verification,
    Expansion,
    FinalAnswer,
    Retrieval,
}

impl std::fmt::Display for Module {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = serde_json::to_value(self).expect("module serializes");
        f.write_str(name.as_str().unwrap_or("module"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    Semantic,
    Relational,
    /// Used when decomposition is disabled: the question itself, retrieved
    /// in hybrid mode.
    Hybrid,
}

impl Channel {
    pub fn tag(self) -> &'static str {
        match self {
            Channel::Semantic => "S",
            Channel::Relational => "R",
            Channel::Hybrid => "H",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "round")]
pub enum Origin {
    Decomposition,
    Expansion(u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubQueryStatus {
    Pending,
    Grounded,
    Answered,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubQuery {
    /// `S<n>`/`R<n>` for decomposition items (n = 1-based list position,
    /// the number used by `Entity#n`), `X<round>.<n>` for expansions, `Q`
    /// for the undecomposed question.
    pub sq_id: String,
    pub text: String,
    pub channel: Channel,
    pub origin: Origin,
    pub placeholders: Vec<String>,
    pub status: SubQueryStatus,
}

fn placeholder_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"Entity#\d+").expect("valid regex"))
}

/// `Entity#<n>` markers in order of first appearance.
pub fn find_placeholders(text: &str) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for m in placeholder_re().find_iter(text) {
        if !out.iter().any(|p| p == m.as_str()) {
            out.push(m.as_str().to_string());
        }
    }
    out
}

impl SubQuery {
    pub fn new(sq_id: impl Into<String>, text: impl Into<String>, channel: Channel, origin: Origin) -> Self {
        let text = text.into();
        Self {
            sq_id: sq_id.into(),
            placeholders: find_placeholders(&text),
            text,
            channel,
            origin,
            status: SubQueryStatus::Pending,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct EvidenceRecord<S> {
    pub sub_query: SubQuery,
    pub raw_context: RetrievedContext<S>,
    pub refined_context: RetrievedContext<S>,
    /// Absent when grounding (which produces intermediate answers) is disabled.
    pub intermediate_answer: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct EvidencePool<S> {
    pub records: Vec<EvidenceRecord<S>>,
    pub merged_context: RetrievedContext<S>,
}

impl<S> Default for EvidencePool<S> {
    fn default() -> Self {
        Self {
            records: Vec::new(),
            merged_context: RetrievedContext::default(),
        }
    }
}

impl<S: Scalar> EvidencePool<S> {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn push(&mut self, record: EvidenceRecord<S>) {
        self.merged_context = crate::retrieval::merge_contexts(&self.merged_context, &record.refined_context);
        self.records.push(record);
    }

    pub fn merged_ids(&self) -> ContextIds {
        self.merged_context.ids()
    }

    pub fn contains_sq(&self, sq_id: &str) -> bool {
        self.records.iter().any(|r| r.sub_query.sq_id == sq_id)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DraftStep {
    pub claim: String,
    pub supporting: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogicDraft {
    pub steps: Vec<DraftStep>,
    pub gaps: Vec<String>,
}

impl LogicDraft {
    pub fn render(&self) -> String {
        let mut out = String::new();
        for (i, step) in self.steps.iter().enumerate() {
            out.push_str(&format!("{}. {}", i + 1, step.claim));
            if !step.supporting.is_empty() {
                out.push_str(&format!(" [{}]", step.supporting.join(", ")));
            }
            out.push('\n');
        }
        for gap in &self.gaps {
            out.push_str(&format!("Missing: {gap}\n"));
        }
        out.trim_end().to_string()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Accept,
    Reject,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Verdict::Accept => "ACCEPT",
            Verdict::Reject => "REJECT",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerificationDecision {
    pub verdict: Verdict,
    pub missing_points: Vec<String>,
}

impl VerificationDecision {
    pub fn accept() -> Self {
        Self {
            verdict: Verdict::Accept,
            missing_points: Vec::new(),
        }
    }

    pub fn reject(points: Vec<String>) -> Self {
        Self {
            verdict: Verdict::Reject,
            missing_points: points,
        }
    }
}

/// Whether the final answer passed verification.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Verified,
    /// The last verification rejected and the budget (or expansion) ran out.
    Unverified,
    /// Verification is disabled.
    Unchecked,
}

impl std::fmt::Display for RunStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            RunStatus::Verified => "verified",
            RunStatus::Unverified => "unverified",
            RunStatus::Unchecked => "unchecked",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchBudget {
    /// Reflection rounds after the initial pass. Zero allowed: one pass only.
    pub max_rounds: u32,
    pub max_subqueries_per_decomposition: usize,
    pub max_expansion_queries: usize,
    pub per_query_top_k: usize,
}

impl Default for SearchBudget {
    fn default() -> Self {
        Self {
            max_rounds: DEFAULT_MAX_ROUNDS,
            max_subqueries_per_decomposition: DEFAULT_MAX_SUBQUERIES,
            max_expansion_queries: DEFAULT_MAX_EXPANSION,
            per_query_top_k: DEFAULT_TOP_K,
        }
    }
}

/// Independent on/off switches for each agent module.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModuleToggles {
    pub qd: bool,
    pub cr: bool,
    pub qg: bool,
    pub ld: bool,
    pub ev: bool,
    pub qe: bool,
}

impl Default for ModuleToggles {
    fn default() -> Self {
        Self::all()
    }
}

pub const TOGGLE_NAMES: [&str; 6] = ["qd", "cr", "qg", "ld", "ev", "qe"];

impl ModuleToggles {
    pub fn all() -> Self {
        Self {
            qd: true,
            cr: true,
            qg: true,
            ld: true,
            ev: true,
            qe: true,
        }
    }

    pub fn none() -> Self {
        Self {
            qd: false,
            cr: false,
            qg: false,
            ld: false,
            ev: false,
            qe: false,
        }
    }

    /// Parses a comma-separated set of enabled modules, e.g. `qd,cr`.
    /// An empty string or `none` disables all.
    pub fn parse_set(spec: &str) -> Result<Self, PipelineError> {
        let mut t = Self::none();
        for name in spec.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            match name.to_ascii_lowercase().as_str() {
                "qd" => t.qd = true,
                "cr" => t.cr = true,
                "qg" => t.qg = true,
                "ld" => t.ld = true,
                "ev" => t.ev = true,
                "qe" => t.qe = true,
                "none" => {}
                "all" => t = Self::all(),
                other => {
                    return Err(PipelineError::Config(format!(
                        "unknown module toggle {other:?} (expected one of {})",
                        TOGGLE_NAMES.join(", ")
                    )))
                }
            }
        }
        t.validate()?;
        Ok(t)
    }

    /// Dependency chain: qe needs ev, ev needs ld, qg needs qd.
    pub fn validate(&self) -> Result<(), PipelineError> {
        let rules = [
            (self.qe, self.ev, "qe requires ev"),
            (self.ev, self.ld, "ev requires ld"),
            (self.qg, self.qd, "qg requires qd"),
        ];
        for (on, needs, msg) in rules {
            if on && !needs {
                return Err(PipelineError::Config(msg.into()));
            }
        }
        Ok(())
    }

    pub fn label(&self) -> String {
        let flags = [self.qd, self.cr, self.qg, self.ld, self.ev, self.qe];
        let on: Vec<&str> = TOGGLE_NAMES.iter().zip(flags).filter(|(_, f)| *f).map(|(n, _)| *n).collect();
        if on.is_empty() {
            "none".into()
        } else {
            on.join(",")
        }
    }
}

/// How sub-queries are routed to retrieval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelMode {
    /// Semantic sub-queries to chunks, relational ones to the graph.
    Dual,
    Semantic,
    Relational,
    Hybrid,
}

impl ChannelMode {
    pub fn route(self, channel: Channel) -> RetrievalMode {
        match (self, channel) {
            (_, Channel::Hybrid) | (ChannelMode::Hybrid, _) => RetrievalMode::Hybrid,
            (ChannelMode::Semantic, _) => RetrievalMode::Semantic,
            (ChannelMode::Relational, _) => RetrievalMode::Relational,
            (ChannelMode::Dual, Channel::Semantic) => RetrievalMode::Semantic,
            (ChannelMode::Dual, Channel::Relational) => RetrievalMode::Relational,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchConfig {
    pub budget: SearchBudget,
    pub toggles: ModuleToggles,
    pub channels: ChannelMode,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            budget: SearchBudget::default(),
            toggles: ModuleToggles::all(),
            channels: ChannelMode::Dual,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        self.toggles.validate()?;
        let b = &self.budget;
        for (value, name) in [
            (b.max_subqueries_per_decomposition, "max_subqueries_per_decomposition"),
            (b.max_expansion_queries, "max_expansion_queries"),
            (b.per_query_top_k, "per_query_top_k"),
        ] {
            if value == 0 {
                return Err(PipelineError::Config(format!("{name} must be positive")));
            }
        }
        Ok(())
    }
}
