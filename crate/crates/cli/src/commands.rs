use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use kgsearch::eval::{
    load_dataset, recall_by_step, render_table, run_benchmark, BenchmarkOptions, EvalReport, MAX_FAILURE_RATE,
};
use kgsearch::indexer::{build_index, load_corpus, save_build, Extractor, LlmExtractor, RuleBasedExtractor, WordUnits};
use kgsearch::kb::store::{load_with_manifest, read_manifest};
use kgsearch::llm::{provider_from_config, LlmConfig, LlmProvider};
use kgsearch::pipeline::{
    baseline_config, run_deep_search, Channel, ModuleToggles, SearchRequest, SearchTrace, TraceError, TraceEventKind,
};
use kgsearch::retrieval::{GraphRetriever, RetrievalIndex};

use crate::config::{AppConfig, ExtractorKind};
use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum AskMode {
    Deepsearch,
    Baseline,
}

impl AskMode {
    fn label(self) -> &'static str {
        match self {
            AskMode::Deepsearch => "deepsearch",
            AskMode::Baseline => "baseline",
        }
    }
}

fn provider(llm: &LlmConfig) -> Result<Arc<dyn LlmProvider>, CliError> {
    provider_from_config(llm).map_err(|e| CliError::Config(e.to_string()))
}

fn staging_dir(target: &Path) -> PathBuf {
    let name = target.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_else(|| "index".into());
    target.with_file_name(format!(".{name}.staging"))
}

/// Builds the store and embedding sidecars, then swaps them into place so a
/// failed build never leaves a half-written index behind.
pub fn index(cfg: &AppConfig) -> Result<String, CliError> {
    let corpus_path = cfg
        .corpus_path
        .as_ref()
        .ok_or_else(|| CliError::Config("no corpus given (set corpus_path or pass --corpus)".into()))?;
    if cfg.extractor == ExtractorKind::Llm {
        AppConfig::check_llm(&cfg.llm, "llm")?;
    }
    cfg.check_embedder_key()?;

    let docs = load_corpus(corpus_path).map_err(|e| CliError::Index(e.to_string()))?;
    let extractor: Box<dyn Extractor> = match cfg.extractor {
        ExtractorKind::RuleBased => Box::new(RuleBasedExtractor),
        ExtractorKind::Llm => Box::new(LlmExtractor::new(
            provider(&cfg.llm)?.session("index"),
            cfg.indexer.extract_attempts,
        )),
    };
    let out = build_index(&docs, &cfg.indexer, extractor.as_ref(), &WordUnits)
        .map_err(|e| CliError::Index(e.to_string()))?;
    let embedder = cfg.embedder.build();
    let vectors = RetrievalIndex::build(&out.kb, embedder.as_ref()).map_err(|e| CliError::Index(e.to_string()))?;

    let target = &cfg.index_dir;
    let staging = staging_dir(target);
    let io = |e: std::io::Error, p: &Path| CliError::Index(format!("{}: {e}", p.display()));
    if staging.exists() {
        fs::remove_dir_all(&staging).map_err(|e| io(e, &staging))?;
    }
    let manifest = save_build(&out, &staging, Some(embedder.identity())).map_err(|e| CliError::Index(e.to_string()))?;
    vectors.save(&staging).map_err(|e| CliError::Index(e.to_string()))?;
    if target.exists() {
        fs::remove_dir_all(target).map_err(|e| io(e, target))?;
    }
    fs::rename(&staging, target).map_err(|e| io(e, target))?;

    let c = &manifest.counts;
    let mut msg = format!(
        "indexed {} documents into {}: {} chunks, {} entities, {} relations",
        c.documents,
        target.display(),
        c.chunks,
        c.entities,
        c.relations
    );
    if !out.report.failures.is_empty() {
        let _ = write!(msg, " ({} chunks failed extraction)", out.report.failures.len());
    }
    Ok(msg)
}

pub fn open_retriever(cfg: &AppConfig) -> Result<GraphRetriever<f64>, CliError> {
    let dir = &cfg.index_dir;
    let manifest = read_manifest(dir).map_err(|e| CliError::Index(format!("{e} (build it with `kgsearch index`)")))?;
    let embedder = cfg.embedder.build();
    let want = embedder.identity();
    if manifest.embedder.as_deref() != Some(want.as_str()) {
        return Err(CliError::Config(format!(
            "index was embedded with {:?} but the configuration uses {want:?}",
            manifest.embedder.unwrap_or_default()
        )));
    }
    let (kb, _) = load_with_manifest(dir).map_err(|e| CliError::Index(e.to_string()))?;
    let vectors = RetrievalIndex::load(dir, &kb).map_err(|e| CliError::Index(e.to_string()))?;
    GraphRetriever::from_parts(Arc::new(kb), vectors, embedder, cfg.retriever.clone())
        .map_err(|e| CliError::Index(e.to_string()))
}

pub fn ask(
    cfg: &AppConfig,
    question: &str,
    mode: AskMode,
    trace_out: Option<&Path>,
    evidence: Vec<String>,
) -> Result<String, CliError> {
    AppConfig::check_llm(&cfg.llm, "llm")?;
    cfg.check_embedder_key()?;
    let search = match mode {
        AskMode::Deepsearch => cfg.search(),
        AskMode::Baseline => baseline_config(cfg.retriever.top_k),
    };
    let retriever = open_retriever(cfg)?;
    let llm = provider(&cfg.llm)?.session(question);
    let mut request = SearchRequest::new(question).with_mode(mode.label());
    if !evidence.is_empty() {
        request = request.with_golden_evidence(evidence);
    }
    let save = |trace: &SearchTrace<f64>| -> Result<(), CliError> {
        match trace_out {
            Some(p) => trace.save(p).map_err(|e| CliError::Run(e.to_string())),
            None => Ok(()),
        }
    };
    match run_deep_search(request, &retriever, llm, &search) {
        Ok(out) => {
            save(&out.trace)?;
            let mut msg = format!(
                "answer: {}\nstatus: {}\nrounds: {}, llm calls: {}, retrieval calls: {}",
                out.answer,
                out.status,
                out.trace.rounds(),
                out.trace.llm_call_count(),
                out.trace.retrieval_call_count()
            );
            if let Some(golden) = out.trace.golden_evidence() {
                if let Ok(r) = recall_by_step(&out.trace, golden) {
                    let _ = write!(msg, "\nrecall by step: {}", fmt_series(&r));
                }
            }
            Ok(msg)
        }
        Err(failure) => {
            save(&failure.trace)?;
            Err(CliError::Run(failure.error.to_string()))
        }
    }
}

fn fmt_series(values: &[f64]) -> String {
    values.iter().map(|v| format!("{v:.2}")).collect::<Vec<_>>().join(" ")
}

pub struct EvalArgs<'a> {
    pub dataset: &'a Path,
    pub ablation: Option<&'a str>,
    pub baseline: bool,
    pub baseline_transcript: Option<&'a Path>,
    pub label: Option<&'a str>,
    pub out: Option<&'a Path>,
}

fn file_label(toggles: &ModuleToggles) -> String {
    if *toggles == ModuleToggles::all() {
        "deepsearch".into()
    } else {
        format!("ablation-{}", toggles.label().replace(',', "-"))
    }
}

pub fn eval(cfg: &AppConfig, args: &EvalArgs<'_>) -> Result<String, CliError> {
    let mut cfg = cfg.clone();
    if let Some(set) = args.ablation {
        cfg.toggles = ModuleToggles::parse_set(set).map_err(|e| CliError::Config(e.to_string()))?;
    }
    cfg.validate()?;
    AppConfig::check_llm(&cfg.llm, "llm")?;
    cfg.check_embedder_key()?;
    let judge_cfg = cfg.judge_config();
    if let Some(j) = &judge_cfg {
        AppConfig::check_llm(j, "judge")?;
    }
    let mut baseline_llm = cfg.llm.clone();
    if let Some(t) = args.baseline_transcript {
        if !args.baseline {
            return Err(CliError::Config("--baseline-transcript needs --baseline".into()));
        }
        baseline_llm.transcript = Some(t.to_path_buf());
        AppConfig::check_llm(&baseline_llm, "baseline llm")?;
    }
    let items = load_dataset(args.dataset).map_err(|e| CliError::Config(e.to_string()))?;
    let retriever = open_retriever(&cfg)?;
    let judge = judge_cfg.as_ref().map(provider).transpose()?;

    let out_dir = args.out.map(Path::to_path_buf).unwrap_or_else(|| cfg.eval.output_dir.clone());
    fs::create_dir_all(&out_dir).map_err(|e| CliError::Run(format!("{}: {e}", out_dir.display())))?;

    let mut runs = Vec::new();
    if args.baseline {
        runs.push(("baseline".to_string(), baseline_config(cfg.retriever.top_k), provider(&baseline_llm)?));
    }
    let label = args.label.map(str::to_string).unwrap_or_else(|| file_label(&cfg.toggles));
    runs.push((label, cfg.search(), provider(&cfg.llm)?));

    let mut reports: Vec<EvalReport> = Vec::new();
    for (label, search, llm) in runs {
        let options = BenchmarkOptions {
            label: label.clone(),
            search,
            concurrency: cfg.eval.concurrency,
            judge: judge.as_deref(),
            trace_dir: Some(out_dir.join("traces")),
        };
        let report = run_benchmark(&items, &retriever, llm.as_ref(), &options).map_err(|e| CliError::Run(e.to_string()))?;
        report
            .save(&out_dir.join(format!("report-{label}.json")))
            .map_err(|e| CliError::Run(e.to_string()))?;
        reports.push(report);
    }
    let table = render_table(&reports);
    let table_path = out_dir.join("table.txt");
    fs::write(&table_path, &table).map_err(|e| CliError::Run(format!("{}: {e}", table_path.display())))?;

    if let Some(worst) = reports.iter().filter(|r| r.breaches_failure_threshold()).map(EvalReport::failure_rate).reduce(f64::max) {
        eprint!("{table}");
        return Err(CliError::Threshold {
            rate: worst,
            limit: MAX_FAILURE_RATE,
        });
    }
    Ok(table.trim_end().to_string())
}

pub fn trace_show(path: &Path) -> Result<String, CliError> {
    let trace = SearchTrace::<f64>::load(path).map_err(|e| match e {
        TraceError::Corrupt { .. } => CliError::CorruptTrace(e.to_string()),
        TraceError::Io { .. } => CliError::Config(e.to_string()),
    })?;
    Ok(render_trace(&trace))
}

fn channel_name(c: Channel) -> &'static str {
    match c {
        Channel::Semantic => "semantic",
        Channel::Relational => "relational",
        Channel::Hybrid => "hybrid",
    }
}

/// Round-by-round timeline. The recall column appears only when the trace
/// carries golden evidence.
pub fn render_trace(trace: &SearchTrace<f64>) -> String {
    let recall = trace.golden_evidence().and_then(|g| recall_by_step(trace, g).ok());
    let mut out = String::new();
    let mut current_round = None;
    let mut appended = 0usize;
    for e in &trace.events {
        if current_round != Some(e.round) && !matches!(e.kind, TraceEventKind::RunStarted { .. }) {
            current_round = Some(e.round);
            let _ = writeln!(out, "round {}", e.round);
        }
        match &e.kind {
            TraceEventKind::RunStarted { question, mode, config, .. } => {
                let _ = writeln!(out, "question: {question}");
                let _ = writeln!(out, "mode: {mode} (modules: {}, k = {})", config.toggles.label(), config.budget.per_query_top_k);
            }
            TraceEventKind::Evidence { record, .. } => {
                let sq = &record.sub_query;
                let answer = record.intermediate_answer.as_deref().unwrap_or("-");
                let _ = write!(out, "  {:<10} {:<6} {} -> {answer}", channel_name(sq.channel), sq.sq_id, sq.text);
                if let Some(r) = recall.as_ref().and_then(|r| r.get(appended)) {
                    let _ = write!(out, "  [recall {r:.2}]");
                }
                appended += 1;
                out.push('\n');
            }
            TraceEventKind::Verification { decision } => {
                let _ = write!(out, "  verdict: {}", decision.verdict);
                if !decision.missing_points.is_empty() {
                    let _ = write!(out, " (missing: {})", decision.missing_points.join("; "));
                }
                out.push('\n');
            }
            TraceEventKind::Expansion { sub_queries } => {
                for sq in sub_queries {
                    let _ = writeln!(out, "  expand: {} {} {}", sq.sq_id, channel_name(sq.channel), sq.text);
                }
            }
            TraceEventKind::Flag { module, message } => {
                let _ = writeln!(out, "  flag [{module}]: {message}");
            }
            TraceEventKind::Final { answer, status, .. } => {
                let _ = writeln!(out, "final answer: {answer} ({status})");
            }
            TraceEventKind::Aborted { error } => {
                let _ = writeln!(out, "aborted: {error}");
            }
            _ => {}
        }
    }
    let _ = write!(
        out,
        "llm calls: {}, retrieval calls: {}",
        trace.llm_call_count(),
        trace.retrieval_call_count()
    );
    out
}
