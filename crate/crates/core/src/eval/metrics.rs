use crate::pipeline::SearchTrace;
use crate::retrieval::RetrievedContext;
use crate::scalar::Scalar;

use super::EvalError;

fn is_punct(c: char) -> bool {
    c.is_ascii_punctuation() || matches!(c, '“' | '”' | '‘' | '’' | '«' | '»' | '…' | '—' | '–')
}

/// Case-fold, collapse whitespace, strip surrounding punctuation.
pub fn normalize_text(text: &str) -> String {
    let collapsed = text.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase();
    collapsed.trim_matches(|c: char| is_punct(c) || c.is_whitespace()).to_string()
}

/// 1 iff the normalized golden answer occurs in the normalized prediction.
pub fn sub_em(prediction: &str, golden_answer: &str) -> u8 {
    let gold = normalize_text(golden_answer);
    if gold.is_empty() {
        return 0;
    }
    u8::from(normalize_text(prediction).contains(&gold))
}

/// Rounds to two decimal places.
pub fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

/// Mean × 100, two decimals.
pub fn aggregate_subem(scores: &[u8]) -> Result<f64, EvalError> {
    if scores.is_empty() {
        return Err(EvalError::InvalidArgument("no SubEM scores to aggregate".into()));
    }
    let hits: u64 = scores.iter().map(|&s| u64::from(s.min(1))).sum();
    Ok(round2(hits as f64 * 100.0 / scores.len() as f64))
}

/// Fraction of golden evidence texts found (normalized substring) in any
/// chunk text or entity/relation description of `context`.
pub fn evidence_recall<S: Scalar>(context: &RetrievedContext<S>, golden_evidence: &[String]) -> Result<f64, EvalError> {
    if golden_evidence.is_empty() {
        return Err(EvalError::InvalidArgument("golden evidence is empty".into()));
    }
    let carriers: Vec<String> = context.evidence_texts().map(normalize_text).collect();
    let matched = golden_evidence
        .iter()
        .map(|g| normalize_text(g))
        .filter(|g| !g.is_empty() && carriers.iter().any(|c| c.contains(g.as_str())))
        .count();
    Ok(matched as f64 / golden_evidence.len() as f64)
}

/// Recall of the merged context after each evidence-pool append.
pub fn recall_by_step<S: Scalar>(trace: &SearchTrace<S>, golden_evidence: &[String]) -> Result<Vec<f64>, EvalError> {
    if golden_evidence.is_empty() {
        return Err(EvalError::InvalidArgument("golden evidence is empty".into()));
    }
    trace
        .merged_snapshots()
        .iter()
        .map(|ctx| evidence_recall(ctx, golden_evidence))
        .collect()
}
