//! SubEM, evidence recall, optional LLM judging, and benchmark reports.

mod judge;
mod metrics;

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::llm::LlmProvider;
use crate::pipeline::{run_deep_search, RunStatus, SearchConfig, SearchRequest, SearchTrace};
use crate::retrieval::Retriever;
use crate::scalar::Scalar;

pub use judge::{judge_scores, parse_judge_scores, JudgeScores};
pub use metrics::{aggregate_subem, evidence_recall, normalize_text, recall_by_step, round2, sub_em};

/// Share of failed items above which a benchmark run counts as failed.
pub const MAX_FAILURE_RATE: f64 = 0.2;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("{file}:{line}: {reason}")]
    Dataset { file: String, line: usize, reason: String },
    #[error("{file}: {source}")]
    Io {
        file: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QaItem {
    pub question: String,
    pub golden_answer: String,
    #[serde(default)]
    pub golden_evidence: Vec<String>,
    #[serde(default)]
    pub metadata: serde_json::Map<String, serde_json::Value>,
}

pub fn parse_dataset(text: &str, file: &str) -> Result<Vec<QaItem>, EvalError> {
    let mut items = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let err = |reason: String| EvalError::Dataset {
            file: file.to_string(),
            line: i + 1,
            reason,
        };
        let item: QaItem = serde_json::from_str(line).map_err(|e| err(e.to_string()))?;
        if item.question.trim().is_empty() {
            return Err(err("question is empty".into()));
        }
        if item.golden_answer.trim().is_empty() {
            return Err(err("golden_answer is empty".into()));
        }
        items.push(item);
    }
    if items.is_empty() {
        return Err(EvalError::Dataset {
            file: file.to_string(),
            line: 0,
            reason: "dataset is empty".into(),
        });
    }
    Ok(items)
}

pub fn load_dataset(path: &Path) -> Result<Vec<QaItem>, EvalError> {
    let file = path.display().to_string();
    let text = fs::read_to_string(path).map_err(|source| EvalError::Io {
        file: file.clone(),
        source,
    })?;
    parse_dataset(&text, &file)
}

/// Hex SHA-256 over the canonical serialization of the items.
pub fn dataset_hash(items: &[QaItem]) -> String {
    let mut h = Sha256::new();
    for item in items {
        h.update(serde_json::to_string(item).expect("items serialize"));
        h.update(b"\n");
    }
    hex::encode(h.finalize())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemRecord {
    pub index: usize,
    pub question: String,
    pub golden_answer: String,
    pub prediction: Option<String>,
    pub status: Option<RunStatus>,
    pub error: Option<String>,
    pub subem: u8,
    pub recall_by_step: Option<Vec<f64>>,
    pub llm_calls: usize,
    pub retrieval_calls: usize,
    pub a_score: Option<f64>,
    pub e_score: Option<f64>,
    pub a_criteria: Option<[u8; 3]>,
    pub e_criteria: Option<[u8; 3]>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub judge_flags: Vec<String>,
    pub trace_path: Option<String>,
}

impl ItemRecord {
    pub fn final_recall(&self) -> Option<f64> {
        self.recall_by_step.as_ref().and_then(|r| r.last().copied())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregates {
    pub items: usize,
    pub failures: usize,
    /// Percentage, two decimals.
    pub subem: f64,
    pub recall: Option<f64>,
    pub a_score: Option<f64>,
    pub e_score: Option<f64>,
}

fn mean2(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| round2(sum / n as f64))
}

impl Aggregates {
    pub fn from_records(records: &[ItemRecord]) -> Result<Self, EvalError> {
        let subems: Vec<u8> = records.iter().map(|r| r.subem).collect();
        Ok(Self {
            items: records.len(),
            failures: records.iter().filter(|r| r.error.is_some()).count(),
            subem: aggregate_subem(&subems)?,
            recall: mean2(records.iter().filter_map(ItemRecord::final_recall)),
            a_score: mean2(records.iter().filter_map(|r| r.a_score)),
            e_score: mean2(records.iter().filter_map(|r| r.e_score)),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub label: String,
    pub dataset_hash: String,
    pub config: SearchConfig,
    pub records: Vec<ItemRecord>,
    pub aggregates: Aggregates,
}

impl EvalReport {
    pub fn failure_rate(&self) -> f64 {
        if self.aggregates.items == 0 {
            0.0
        } else {
            self.aggregates.failures as f64 / self.aggregates.items as f64
        }
    }

    pub fn breaches_failure_threshold(&self) -> bool {
        self.failure_rate() > MAX_FAILURE_RATE
    }

    /// True when the stored aggregates equal a recomputation from records.
    pub fn aggregates_consistent(&self) -> bool {
        Aggregates::from_records(&self.records).is_ok_and(|a| a == self.aggregates)
    }

    pub fn save(&self, path: &Path) -> Result<(), EvalError> {
        let body = serde_json::to_string_pretty(self).expect("report serializes");
        fs::write(path, body + "\n").map_err(|source| EvalError::Io {
            file: path.display().to_string(),
            source,
        })
    }
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.2}")).unwrap_or_else(|| "-".into())
}

/// Text table with one row per report: SubEM, A-Score, E-Score, recall.
pub fn render_table(reports: &[EvalReport]) -> String {
    let header = ["Method", "SubEM", "A-Score", "E-Score", "Recall", "Items", "Failed"];
    let rows: Vec<[String; 7]> = reports
        .iter()
        .map(|r| {
            let a = &r.aggregates;
            [
                r.label.clone(),
                format!("{:.2}", a.subem),
                cell(a.a_score),
                cell(a.e_score),
                cell(a.recall),
                a.items.to_string(),
                a.failures.to_string(),
            ]
        })
        .collect();
    let widths: Vec<usize> = (0..header.len())
        .map(|i| rows.iter().map(|r| r[i].len()).chain([header[i].len()]).max().unwrap_or(0))
        .collect();
    let line = |cells: Vec<&str>| {
        cells
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(i, (c, w))| if i == 0 { format!("{c:<w$}") } else { format!("{c:>w$}") })
            .collect::<Vec<_>>()
            .join(" | ")
    };
    let mut out = vec![line(header.to_vec())];
    out.push(widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().join("-+-"));
    for row in &rows {
        out.push(line(row.iter().map(String::as_str).collect()));
    }
    if let Some(first) = reports.first() {
        out.push(format!("dataset {}", first.dataset_hash));
    }
    out.join("\n") + "\n"
}

pub struct BenchmarkOptions<'a> {
    pub label: String,
    pub search: SearchConfig,
    /// Items evaluated concurrently.
    pub concurrency: usize,
    pub judge: Option<&'a dyn LlmProvider>,
    /// Per-item traces are written here when set.
    pub trace_dir: Option<PathBuf>,
}

fn evaluate_item<S: Scalar>(
    index: usize,
    item: &QaItem,
    retriever: &dyn Retriever<S>,
    llm: &dyn LlmProvider,
    options: &BenchmarkOptions<'_>,
) -> ItemRecord {
    let mut request = SearchRequest::new(item.question.clone()).with_mode(options.label.clone());
    if !item.golden_evidence.is_empty() {
        request = request.with_golden_evidence(item.golden_evidence.clone());
    }
    let session = llm.session(&item.question);
    let (prediction, status, error, trace): (Option<String>, Option<RunStatus>, Option<String>, SearchTrace<S>) =
        match run_deep_search(request, retriever, session, &options.search) {
            Ok(out) => (Some(out.answer), Some(out.status), None, out.trace),
            Err(fail) => (None, None, Some(fail.error.to_string()), fail.trace),
        };
    let mut record = ItemRecord {
        index,
        question: item.question.clone(),
        golden_answer: item.golden_answer.clone(),
        subem: prediction.as_deref().map(|p| sub_em(p, &item.golden_answer)).unwrap_or(0),
        recall_by_step: (!item.golden_evidence.is_empty())
            .then(|| recall_by_step(&trace, &item.golden_evidence).ok())
            .flatten(),
        llm_calls: trace.llm_call_count(),
        retrieval_calls: trace.retrieval_call_count(),
        prediction,
        status,
        error,
        a_score: None,
        e_score: None,
        a_criteria: None,
        e_criteria: None,
        judge_flags: Vec::new(),
        trace_path: None,
    };
    if let Some(dir) = &options.trace_dir {
        let path = dir.join(format!("{}-{index:04}.jsonl", options.label));
        match trace.save(&path) {
            Ok(()) => record.trace_path = Some(path.display().to_string()),
            Err(e) => log::warn!("could not write trace for item {index}: {e}"),
        }
    }
    if let (Some(judge), Some(prediction)) = (options.judge, record.prediction.as_deref()) {
        let model = judge.session(&item.question);
        match judge_scores(
            &item.question,
            prediction,
            &item.golden_answer,
            &item.golden_evidence,
            model.as_ref(),
        ) {
            Ok(scores) => {
                record.a_score = scores.a_score;
                record.e_score = scores.e_score;
                record.a_criteria = scores.a_criteria;
                record.e_criteria = scores.e_criteria;
                record.judge_flags = scores.flags;
            }
            Err(e) => record.judge_flags.push(format!("judge failed: {e}")),
        }
    }
    record
}

/// Runs the engine on every item with bounded concurrency. Records keep
/// input order. Per-item failures are recorded and the run continues.
pub fn run_benchmark<S: Scalar>(
    items: &[QaItem],
    retriever: &dyn Retriever<S>,
    llm: &dyn LlmProvider,
    options: &BenchmarkOptions<'_>,
) -> Result<EvalReport, EvalError> {
    if items.is_empty() {
        return Err(EvalError::InvalidArgument("dataset is empty".into()));
    }
    options
        .search
        .validate()
        .map_err(|e| EvalError::InvalidArgument(e.to_string()))?;
    if let Some(dir) = &options.trace_dir {
        fs::create_dir_all(dir).map_err(|source| EvalError::Io {
            file: dir.display().to_string(),
            source,
        })?;
    }
    let slots: Vec<Mutex<Option<ItemRecord>>> = items.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let workers = options.concurrency.clamp(1, items.len());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(item) = items.get(i) else { break };
                let record = evaluate_item(i, item, retriever, llm, options);
                *slots[i].lock().unwrap_or_else(|e| e.into_inner()) = Some(record);
            });
        }
    });
    let records: Vec<ItemRecord> = slots
        .into_iter()
        .map(|s| s.into_inner().unwrap_or_else(|e| e.into_inner()).expect("every item evaluated"))
        .collect();
    let aggregates = Aggregates::from_records(&records)?;
    Ok(EvalReport {
        label: options.label.clone(),
        dataset_hash: dataset_hash(items),
        config: options.search.clone(),
        records,
        aggregates,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(subem: u8, error: bool, recall: Option<f64>) -> ItemRecord {
        ItemRecord {
            index: 0,
            question: "q".into(),
            golden_answer: "a".into(),
            prediction: (!error).then(|| "a".into()),
            status: None,
            error: error.then(|| "boom".into()),
            subem,
            recall_by_step: recall.map(|r| vec![r]),
            llm_calls: 0,
            retrieval_calls: 0,
            a_score: None,
            e_score: None,
            a_criteria: None,
            e_criteria: None,
            judge_flags: Vec::new(),
            trace_path: None,
        }
    }

    #[test]
    fn aggregates_recompute_and_threshold() {
        let records = vec![record(1, false, Some(1.0)), record(0, true, None), record(0, false, Some(0.5))];
        let a = Aggregates::from_records(&records).unwrap();
        assert_eq!(a.subem, 33.33);
        assert_eq!(a.failures, 1);
        assert_eq!(a.recall, Some(0.75));
        assert_eq!(a.a_score, None);
        let report = EvalReport {
            label: "x".into(),
            dataset_hash: "h".into(),
            config: SearchConfig::default(),
            records,
            aggregates: a,
        };
        assert!(report.aggregates_consistent());
        assert!(report.breaches_failure_threshold());
        let table = render_table(&[report]);
        assert!(table.starts_with("Method | SubEM"));
        assert!(table.contains("33.33"));
    }

    #[test]
    fn dataset_parsing() {
        let text = "{\"question\":\"q\",\"golden_answer\":\"a\",\"golden_evidence\":[\"e\"],\"metadata\":{\"hops\":2}}\n";
        let items = parse_dataset(text, "d").unwrap();
        assert_eq!(items[0].golden_evidence, vec!["e"]);
        assert_eq!(dataset_hash(&items), dataset_hash(&items.clone()));
        assert!(parse_dataset("{\"question\":\"q\",\"golden_answer\":\"\"}", "d").is_err());
        assert!(parse_dataset("", "d").is_err());
    }
}
