use std::collections::HashMap;
use std::sync::Arc;

use thiserror::Error;

use crate::eval::evidence_recall;
use crate::kb::GraphKb;
use crate::llm::{parse_list_response, LanguageModel, LlmRequest, TemplateId};
use crate::retrieval::{ContextIds, RetrievalMode, RetrievedContext, Retriever};
use crate::scalar::{sort_ranked, Scalar};

use super::parse::{parse_expansion, parse_keep_indices, parse_logic_draft, parse_verification};
use super::trace::{SearchTrace, TraceEventKind};
use super::{
    find_placeholders, Channel, ChannelMode, DraftStep, EvidencePool, EvidenceRecord, LogicDraft, Module, ModuleToggles,
    Origin, PipelineError, RunStatus, SearchBudget, SearchConfig, SubQuery, SubQueryStatus, Verdict,
    VerificationDecision, REFINE_FALLBACK_ITEMS, UNKNOWN_ANSWER, VERIFY_UNPARSEABLE,
};

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SearchRequest {
    pub question: String,
    /// Enables recall-by-step in the trace.
    pub golden_evidence: Option<Vec<String>>,
    /// Free-form label recorded in the trace, e.g. `deepsearch`.
    pub mode: String,
}

impl SearchRequest {
    pub fn new(question: impl Into<String>) -> Self {
        Self {
            question: question.into(),
            golden_evidence: None,
            mode: "deepsearch".into(),
        }
    }

    pub fn with_golden_evidence(mut self, golden: Vec<String>) -> Self {
        self.golden_evidence = Some(golden);
        self
    }

    pub fn with_mode(mut self, mode: impl Into<String>) -> Self {
        self.mode = mode.into();
        self
    }
}

#[derive(Debug, Clone)]
pub struct SearchOutcome<S> {
    pub answer: String,
    pub status: RunStatus,
    pub pool: EvidencePool<S>,
    pub trace: SearchTrace<S>,
}

/// A failed run and everything recorded up to the failure.
#[derive(Debug, Error)]
#[error("{error}")]
pub struct SearchFailure<S: Scalar> {
    #[source]
    pub error: PipelineError,
    pub trace: SearchTrace<S>,
}

/// Single-round hybrid retrieval followed by one answer call.
pub fn baseline_config(per_query_top_k: usize) -> SearchConfig {
    SearchConfig {
        budget: SearchBudget {
            per_query_top_k,
            ..SearchBudget::default()
        },
        toggles: ModuleToggles::none(),
        channels: ChannelMode::Hybrid,
    }
}

/// State of one run. Module operations are exposed individually so they
/// can be exercised in isolation; [`SearchSession::run`] chains them.
pub struct SearchSession<'a, S: Scalar> {
    retriever: &'a dyn Retriever<S>,
    llm: Arc<dyn LanguageModel>,
    config: SearchConfig,
    question: String,
    golden: Option<Vec<String>>,
    round: u32,
    ordinals: HashMap<TemplateId, u32>,
    pub pool: EvidencePool<S>,
    pub trace: SearchTrace<S>,
}

impl<'a, S: Scalar> SearchSession<'a, S> {
    pub fn new(
        request: SearchRequest,
        retriever: &'a dyn Retriever<S>,
        llm: Arc<dyn LanguageModel>,
        config: SearchConfig,
    ) -> Result<Self, PipelineError> {
        config.validate()?;
        if request.question.trim().is_empty() {
            return Err(PipelineError::Precondition {
                op: "run_deep_search",
                reason: "question is empty".into(),
            });
        }
        let mut trace = SearchTrace::default();
        trace.push(
            0,
            TraceEventKind::RunStarted {
                question: request.question.clone(),
                mode: request.mode,
                config: config.clone(),
                golden_evidence: request.golden_evidence.clone(),
            },
        );
        Ok(Self {
            retriever,
            llm,
            config,
            question: request.question,
            golden: request.golden_evidence,
            round: 0,
            ordinals: HashMap::new(),
            pool: EvidencePool::default(),
            trace,
        })
    }

    pub fn round(&self) -> u32 {
        self.round
    }

    fn kb(&self) -> &GraphKb {
        self.retriever.kb()
    }

    fn flag(&mut self, module: Module, message: impl Into<String>) {
        let message = message.into();
        log::warn!("{module}: {message}");
        self.trace.push(self.round, TraceEventKind::Flag { module, message });
    }

    fn call(&mut self, module: Module, template: TemplateId, bindings: &[(&str, &str)]) -> Result<String, PipelineError> {
        let request = LlmRequest::render(template, bindings).map_err(|source| PipelineError::Llm { module, source })?;
        let ordinal = {
            let n = self.ordinals.entry(template).or_insert(0);
            *n += 1;
            *n
        };
        let response = self
            .llm
            .complete(&request)
            .map_err(|source| PipelineError::Llm { module, source })?;
        self.trace.push(
            self.round,
            TraceEventKind::LlmCall {
                module,
                template,
                ordinal,
                prompt_digest: request.digest(),
                response: response.clone(),
            },
        );
        Ok(response)
    }

    /// One call per channel; lists truncated to the decomposition cap.
    pub fn decompose(&mut self) -> Result<(Vec<SubQuery>, Vec<SubQuery>), PipelineError> {
        let max = self.config.budget.max_subqueries_per_decomposition;
        let max_items = max.to_string();
        let question = self.question.clone();
        let mut lists = Vec::with_capacity(2);
        for (template, channel) in [
            (TemplateId::QdSemantic, Channel::Semantic),
            (TemplateId::QdRelational, Channel::Relational),
        ] {
            let text = self.call(
                Module::Decomposition,
                template,
                &[("question", &question), ("max_items", &max_items)],
            )?;
            let parsed = parse_list_response(&text);
            if parsed.degraded && !parsed.items.is_empty() {
                self.flag(Module::Decomposition, format!("{template}: no list markers, using whole response"));
            }
            if parsed.items.len() > max {
                self.flag(
                    Module::Decomposition,
                    format!("{template}: {} items truncated to {max}", parsed.items.len()),
                );
            }
            let list: Vec<SubQuery> = parsed
                .items
                .into_iter()
                .take(max)
                .enumerate()
                .map(|(i, text)| SubQuery::new(format!("{}{}", channel.tag(), i + 1), text, channel, Origin::Decomposition))
                .collect();
            lists.push(list);
        }
        let relational = lists.pop().unwrap_or_default();
        let semantic = lists.pop().unwrap_or_default();
        Ok((semantic, relational))
    }

    fn history(&self) -> String {
        self.pool
            .records
            .iter()
            .filter_map(|r| {
                r.intermediate_answer
                    .as_ref()
                    .map(|a| format!("{}. {} -> {}", r.sub_query.sq_id, r.sub_query.text, a))
            })
            .collect::<Vec<_>>()
            .join("\n")
    }

    /// Resolves `Entity#n` markers from earlier answers. Pass-through when
    /// there is nothing to resolve or nothing to resolve it with.
    pub fn ground_query(&mut self, mut sq: SubQuery) -> Result<SubQuery, PipelineError> {
        if sq.status != SubQueryStatus::Pending {
            return Err(PipelineError::Precondition {
                op: "ground_query",
                reason: format!("{} is not pending", sq.sq_id),
            });
        }
        let before = sq.text.clone();
        let history = self.history();
        let needs_llm = self.config.toggles.qg && !sq.placeholders.is_empty() && !history.is_empty();
        if needs_llm {
            let mut best = sq.text.clone();
            for attempt in 0..2 {
                let text = self.call(
                    Module::Grounding,
                    TemplateId::QueryGround,
                    &[("history", &history), ("query", &sq.text)],
                )?;
                let text = text.lines().map(str::trim).find(|l| !l.is_empty()).unwrap_or("").to_string();
                if !text.is_empty() {
                    best = text;
                }
                if find_placeholders(&best).is_empty() {
                    break;
                }
                if attempt == 1 {
                    self.flag(Module::Grounding, format!("{}: placeholders remain after retry", sq.sq_id));
                }
            }
            sq.text = best;
        } else if !sq.placeholders.is_empty() {
            self.flag(Module::Grounding, format!("{}: unresolved placeholders passed through", sq.sq_id));
        }
        sq.placeholders.clear();
        sq.status = SubQueryStatus::Grounded;
        self.trace.push(
            self.round,
            TraceEventKind::Grounding {
                sq_id: sq.sq_id.clone(),
                before,
                after: sq.text.clone(),
                llm: needs_llm,
            },
        );
        Ok(sq)
    }

    pub fn route(&self, sq: &SubQuery) -> RetrievalMode {
        self.config.channels.route(sq.channel)
    }

    pub fn retrieve_for(&mut self, sq: &SubQuery) -> Result<RetrievedContext<S>, PipelineError> {
        if sq.status != SubQueryStatus::Grounded {
            return Err(PipelineError::Precondition {
                op: "retrieve_for",
                reason: format!("{} is not grounded", sq.sq_id),
            });
        }
        let mode = self.route(sq);
        let k = self.config.budget.per_query_top_k;
        let context = self
            .retriever
            .retrieve(&sq.text, k, mode)
            .map_err(|source| PipelineError::Retrieval {
                sq_id: sq.sq_id.clone(),
                source,
            })?;
        self.trace.push(
            self.round,
            TraceEventKind::Retrieval {
                sq_id: sq.sq_id.clone(),
                mode,
                k,
                ids: context.ids(),
            },
        );
        Ok(context)
    }

    /// Candidate lines `[i] …` in the order entities, relations, chunks.
    fn candidate_lines(&self, ctx: &RetrievedContext<S>, numbered: bool) -> Vec<String> {
        let kb = self.kb();
        let name = |id| kb.entity(id).map(|e| e.name.as_str()).unwrap_or("?");
        let items = ctx
            .entities
            .iter()
            .map(|e| format!("Entity: {}: {}", e.item.name, e.item.description))
            .chain(ctx.relations.iter().map(|r| {
                format!(
                    "Relation: {} -> {}: {}",
                    name(r.item.head_entity_id),
                    name(r.item.tail_entity_id),
                    r.item.description
                )
            }))
            .chain(ctx.chunks.iter().map(|c| format!("Passage: {}", c.item.text)));
        if numbered {
            items.enumerate().map(|(i, s)| format!("[{i}] {s}")).collect()
        } else {
            items.map(|s| format!("- {s}")).collect()
        }
    }

    fn render_context(&self, ctx: &RetrievedContext<S>) -> String {
        let lines = self.candidate_lines(ctx, false);
        if lines.is_empty() {
            "(empty)".into()
        } else {
            lines.join("\n")
        }
    }

    /// Keeps the candidates the model selects by index; never adds items.
    pub fn refine_context(&mut self, sq: &SubQuery, raw: &RetrievedContext<S>) -> Result<RetrievedContext<S>, PipelineError> {
        if raw.is_empty() || !self.config.toggles.cr {
            return Ok(raw.clone());
        }
        let candidates = self.candidate_lines(raw, true).join("\n");
        let text = self.call(
            Module::Refinement,
            TemplateId::ContextRefine,
            &[("query", &sq.text), ("candidates", &candidates)],
        )?;
        let n = raw.len();
        let keep = parse_keep_indices(&text, n);
        if !keep.out_of_range.is_empty() {
            self.flag(
                Module::Refinement,
                format!("{}: ignored out-of-range indices {:?}", sq.sq_id, keep.out_of_range),
            );
        }
        let mut indices = keep.indices;
        if indices.is_empty() {
            let take = REFINE_FALLBACK_ITEMS.min(n);
            self.flag(
                Module::Refinement,
                format!("{}: empty keep list, falling back to top {take} items", sq.sq_id),
            );
            let mut scored: Vec<(S, u64)> = raw
                .entities
                .iter()
                .map(|e| e.score)
                .chain(raw.relations.iter().map(|r| r.score))
                .chain(raw.chunks.iter().map(|c| c.score))
                .enumerate()
                .map(|(i, s)| (s, i as u64))
                .collect();
            sort_ranked(&mut scored, |t| *t);
            indices = scored.into_iter().take(take).map(|(_, i)| i as usize).collect();
        }
        let (ne, nr) = (raw.entities.len(), raw.relations.len());
        let mut ids = ContextIds::default();
        for i in indices {
            if i < ne {
                ids.entities.insert(raw.entities[i].item.entity_id);
            } else if i < ne + nr {
                ids.relations.insert(raw.relations[i - ne].item.relation_id);
            } else {
                ids.chunks.insert(raw.chunks[i - ne - nr].item.chunk_id);
            }
        }
        Ok(raw.restricted_to(&ids))
    }

    pub fn answer_subquery(&mut self, sq: &SubQuery, refined: &RetrievedContext<S>) -> Result<String, PipelineError> {
        if sq.status != SubQueryStatus::Grounded {
            return Err(PipelineError::Precondition {
                op: "answer_subquery",
                reason: format!("{} is not grounded", sq.sq_id),
            });
        }
        let context = self.render_context(refined);
        let text = self.call(
            Module::SubAnswer,
            TemplateId::AnswerSubquery,
            &[("context", &context), ("query", &sq.text)],
        )?;
        let answer = text.trim();
        if answer.is_empty() {
            self.flag(Module::SubAnswer, format!("{}: empty answer recorded as {UNKNOWN_ANSWER}", sq.sq_id));
            return Ok(UNKNOWN_ANSWER.into());
        }
        Ok(answer.to_string())
    }

    /// Appends one record to the pool; one step on the recall axis.
    pub fn record_evidence(
        &mut self,
        mut sq: SubQuery,
        raw: RetrievedContext<S>,
        refined: RetrievedContext<S>,
        answer: Option<String>,
    ) {
        sq.status = SubQueryStatus::Answered;
        let record = EvidenceRecord {
            sub_query: sq,
            raw_context: raw,
            refined_context: refined,
            intermediate_answer: answer,
        };
        self.pool.push(record.clone());
        let step = self.pool.len();
        let merged = self.pool.merged_ids();
        self.trace.push(self.round, TraceEventKind::Evidence { step, record, merged });
    }

    /// Ground, retrieve, refine and (when grounding is on) answer.
    pub fn process_subquery(&mut self, sq: SubQuery) -> Result<(), PipelineError> {
        let sq = self.ground_query(sq)?;
        let raw = self.retrieve_for(&sq)?;
        let refined = self.refine_context(&sq, &raw)?;
        let answer = if self.config.toggles.qg {
            Some(self.answer_subquery(&sq, &refined)?)
        } else {
            None
        };
        self.record_evidence(sq, raw, refined, answer);
        Ok(())
    }

    fn render_evidence(&self) -> String {
        self.pool
            .records
            .iter()
            .map(|r| {
                format!(
                    "[{}] {}\nAnswer: {}\nContext:\n{}",
                    r.sub_query.sq_id,
                    r.sub_query.text,
                    r.intermediate_answer.as_deref().unwrap_or("(not generated)"),
                    self.render_context(&r.refined_context)
                )
            })
            .collect::<Vec<_>>()
            .join("\n\n")
    }

    fn require_pool(&self, op: &'static str) -> Result<(), PipelineError> {
        if self.pool.is_empty() {
            return Err(PipelineError::Precondition {
                op,
                reason: "evidence pool is empty".into(),
            });
        }
        Ok(())
    }

    /// Drafts over the full pool, including expansion records.
    pub fn draft_logic(&mut self) -> Result<LogicDraft, PipelineError> {
        self.require_pool("draft_logic")?;
        let evidence = self.render_evidence();
        let question = self.question.clone();
        let text = self.call(
            Module::Drafting,
            TemplateId::LogicDraft,
            &[("question", &question), ("evidence", &evidence)],
        )?;
        let mut draft = match parse_logic_draft(&text) {
            Some(d) => d,
            None => {
                self.flag(Module::Drafting, "unparseable draft wrapped as a single step");
                LogicDraft {
                    steps: vec![DraftStep {
                        claim: text.trim().to_string(),
                        supporting: Vec::new(),
                    }],
                    gaps: Vec::new(),
                }
            }
        };
        let mut unknown = Vec::new();
        for step in &mut draft.steps {
            step.supporting.retain(|id| {
                let known = self.pool.contains_sq(id);
                if !known {
                    unknown.push(id.clone());
                }
                known
            });
        }
        if !unknown.is_empty() {
            self.flag(Module::Drafting, format!("dropped unknown sub-query ids {unknown:?}"));
        }
        self.trace.push(self.round, TraceEventKind::Draft { draft: draft.clone() });
        Ok(draft)
    }

    pub fn verify(&mut self, draft: &LogicDraft) -> Result<VerificationDecision, PipelineError> {
        self.require_pool("verify")?;
        let evidence = self.render_evidence();
        let rendered = draft.render();
        let question = self.question.clone();
        let bindings = [
            ("question", question.as_str()),
            ("evidence", evidence.as_str()),
            ("draft", rendered.as_str()),
        ];
        let mut decision = None;
        for _ in 0..2 {
            let text = self.call(Module::Verification, TemplateId::EvidenceVerify, &bindings)?;
            match parse_verification(&text) {
                Ok(d) => {
                    decision = Some(d);
                    break;
                }
                Err(e) => self.flag(Module::Verification, format!("grammar violation: {e}")),
            }
        }
        let mut decision = decision.unwrap_or_else(|| {
            VerificationDecision::reject(vec![VERIFY_UNPARSEABLE.into()])
        });
        if decision.verdict == Verdict::Reject && decision.missing_points.is_empty() {
            self.flag(Module::Verification, "REJECT without missing points");
            decision.missing_points.push("unspecified missing evidence".into());
        }
        self.trace.push(
            self.round,
            TraceEventKind::Verification {
                decision: decision.clone(),
            },
        );
        Ok(decision)
    }

    pub fn expand(&mut self, draft: &LogicDraft, decision: &VerificationDecision) -> Result<Vec<SubQuery>, PipelineError> {
        if decision.verdict != Verdict::Reject {
            return Err(PipelineError::Precondition {
                op: "expand",
                reason: "verdict is not Reject".into(),
            });
        }
        let max = self.config.budget.max_expansion_queries;
        let max_items = max.to_string();
        let evidence = self.render_evidence();
        let rendered = draft.render();
        let missing = decision
            .missing_points
            .iter()
            .map(|p| format!("- {p}"))
            .collect::<Vec<_>>()
            .join("\n");
        let question = self.question.clone();
        let text = self.call(
            Module::Expansion,
            TemplateId::QueryExpand,
            &[
                ("max_items", &max_items),
                ("question", &question),
                ("evidence", &evidence),
                ("draft", &rendered),
                ("missing", &missing),
            ],
        )?;
        let (items, untagged) = parse_expansion(&text);
        if untagged > 0 {
            self.flag(Module::Expansion, format!("ignored {untagged} lines without S:/R: tag"));
        }
        if items.len() > max {
            self.flag(Module::Expansion, format!("{} items truncated to {max}", items.len()));
        }
        let round = self.round;
        let subs: Vec<SubQuery> = items
            .into_iter()
            .take(max)
            .enumerate()
            .map(|(i, (channel, text))| SubQuery::new(format!("X{round}.{}", i + 1), text, channel, Origin::Expansion(round)))
            .collect();
        self.trace.push(
            self.round,
            TraceEventKind::Expansion {
                sub_queries: subs.clone(),
            },
        );
        Ok(subs)
    }

    pub fn generate_final_answer(&mut self, draft: Option<&LogicDraft>) -> Result<String, PipelineError> {
        self.require_pool("generate_final_answer")?;
        let context = self.render_context(&self.pool.merged_context);
        let answers = self
            .pool
            .records
            .iter()
            .map(|r| {
                format!(
                    "{}. {} -> {}",
                    r.sub_query.sq_id,
                    r.sub_query.text,
                    r.intermediate_answer.as_deref().unwrap_or("(not generated)")
                )
            })
            .collect::<Vec<_>>()
            .join("\n");
        let draft = draft.map(LogicDraft::render).unwrap_or_else(|| "(no draft)".into());
        let question = self.question.clone();
        let text = self.call(
            Module::FinalAnswer,
            TemplateId::FinalAnswer,
            &[
                ("question", &question),
                ("context", &context),
                ("answers", &answers),
                ("draft", &draft),
            ],
        )?;
        Ok(text.trim().to_string())
    }

    fn initial_queue(&mut self) -> Result<Vec<SubQuery>, PipelineError> {
        let question = self.question.clone();
        let question_only = || vec![SubQuery::new("Q", question.clone(), Channel::Hybrid, Origin::Decomposition)];
        if !self.config.toggles.qd {
            return Ok(question_only());
        }
        let (semantic, relational) = self.decompose()?;
        if semantic.is_empty() && relational.is_empty() {
            self.flag(Module::Decomposition, "empty decomposition, using the question itself");
            return Ok(question_only());
        }
        // Interleave by position: S1, R1, S2, R2, ...
        let mut queue = Vec::with_capacity(semantic.len() + relational.len());
        let mut s = semantic.into_iter();
        let mut r = relational.into_iter();
        loop {
            let (a, b) = (s.next(), r.next());
            if a.is_none() && b.is_none() {
                break;
            }
            queue.extend(a);
            queue.extend(b);
        }
        Ok(queue)
    }

    fn run_inner(&mut self) -> Result<(String, RunStatus), PipelineError> {
        let toggles = self.config.toggles;
        let queue = self.initial_queue()?;
        self.trace.push(
            self.round,
            TraceEventKind::Decomposition {
                sub_queries: queue.clone(),
            },
        );
        for sq in queue {
            self.process_subquery(sq)?;
        }

        let mut draft = None;
        let status = loop {
            if !toggles.ld {
                break RunStatus::Unchecked;
            }
            let d = self.draft_logic()?;
            if !toggles.ev {
                draft = Some(d);
                break RunStatus::Unchecked;
            }
            let decision = self.verify(&d)?;
            draft = Some(d);
            if decision.verdict == Verdict::Accept {
                break RunStatus::Verified;
            }
            if !toggles.qe || self.round >= self.config.budget.max_rounds {
                break RunStatus::Unverified;
            }
            self.round += 1;
            let expansions = self.expand(draft.as_ref().expect("set above"), &decision)?;
            if expansions.is_empty() {
                self.flag(Module::Expansion, "empty expansion on reject, stopping");
                break RunStatus::Unverified;
            }
            for sq in expansions {
                self.process_subquery(sq)?;
            }
        };
        let answer = self.generate_final_answer(draft.as_ref())?;
        Ok((answer, status))
    }

    /// Recall of the merged context after each pool append.
    pub fn recall_by_step(&self) -> Option<Vec<f64>> {
        let golden = self.golden.as_ref()?;
        self.trace
            .merged_snapshots()
            .iter()
            .map(|ctx| evidence_recall(ctx, golden).ok())
            .collect()
    }

    pub fn run(mut self) -> Result<SearchOutcome<S>, SearchFailure<S>> {
        match self.run_inner() {
            Ok((answer, status)) => {
                let recall_by_step = self.recall_by_step();
                self.trace.push(
                    self.round,
                    TraceEventKind::Final {
                        answer: answer.clone(),
                        status,
                        recall_by_step,
                    },
                );
                Ok(SearchOutcome {
                    answer,
                    status,
                    pool: self.pool,
                    trace: self.trace,
                })
            }
            Err(error) => {
                self.trace.push(
                    self.round,
                    TraceEventKind::Aborted {
                        error: error.to_string(),
                    },
                );
                Err(SearchFailure {
                    error,
                    trace: self.trace,
                })
            }
        }
    }
}

pub fn run_deep_search<S: Scalar>(
    request: SearchRequest,
    retriever: &dyn Retriever<S>,
    llm: Arc<dyn LanguageModel>,
    config: &SearchConfig,
) -> Result<SearchOutcome<S>, SearchFailure<S>> {
    match SearchSession::new(request, retriever, llm, config.clone()) {
        Ok(session) => session.run(),
        Err(error) => Err(SearchFailure {
            error,
            trace: SearchTrace::default(),
        }),
    }
}
