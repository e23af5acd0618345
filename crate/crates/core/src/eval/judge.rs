use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::llm::{LanguageModel, LlmError, LlmRequest, TemplateId};

use super::round2;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct JudgeScores {
    pub a_score: Option<f64>,
    pub e_score: Option<f64>,
    /// Correctness, logical coherence, comprehensiveness.
    pub a_criteria: Option<[u8; 3]>,
    /// Relevance, knowledgeability, factuality.
    pub e_criteria: Option<[u8; 3]>,
    pub flags: Vec<String>,
}

/// Three comma-separated integers, each within 0..=10.
pub fn parse_judge_scores(text: &str) -> Option<[u8; 3]> {
    static RE: OnceLock<Regex> = OnceLock::new();
    let re = RE.get_or_init(|| Regex::new(r"(\d+)\s*,\s*(\d+)\s*,\s*(\d+)").expect("valid regex"));
    let caps = re.captures(text)?;
    let mut out = [0u8; 3];
    for (slot, i) in out.iter_mut().zip(1..=3) {
        let v: u32 = caps[i].parse().ok()?;
        if v > 10 {
            return None;
        }
        *slot = v as u8;
    }
    Some(out)
}

fn mean3(c: [u8; 3]) -> f64 {
    round2(c.iter().map(|&v| f64::from(v)).sum::<f64>() / 3.0)
}

fn ask(
    judge: &dyn LanguageModel,
    template: TemplateId,
    bindings: &[(&str, &str)],
    flags: &mut Vec<String>,
) -> Result<Option<[u8; 3]>, LlmError> {
    let request = LlmRequest::render(template, bindings)?;
    for attempt in 1..=2 {
        let text = judge.complete(&request)?;
        if let Some(scores) = parse_judge_scores(&text) {
            return Ok(Some(scores));
        }
        flags.push(format!("{template}: attempt {attempt} unparseable or out of range: {:?}", text.trim()));
    }
    Ok(None)
}

/// Two judge calls (answer, evidence), each averaging its three criteria.
pub fn judge_scores(
    question: &str,
    prediction: &str,
    golden_answer: &str,
    golden_evidence: &[String],
    judge: &dyn LanguageModel,
) -> Result<JudgeScores, LlmError> {
    let mut flags = Vec::new();
    let a = ask(
        judge,
        TemplateId::JudgeAnswer,
        &[
            ("question", question),
            ("golden_answer", golden_answer),
            ("prediction", prediction),
        ],
        &mut flags,
    )?;
    let evidence = if golden_evidence.is_empty() {
        "(none)".to_string()
    } else {
        golden_evidence.iter().map(|e| format!("- {e}")).collect::<Vec<_>>().join("\n")
    };
    let e = ask(
        judge,
        TemplateId::JudgeEvidence,
        &[
            ("question", question),
            ("golden_evidence", &evidence),
            ("prediction", prediction),
        ],
        &mut flags,
    )?;
    Ok(JudgeScores {
        a_score: a.map(mean3),
        e_score: e.map(mean3),
        a_criteria: a,
        e_criteria: e,
        flags,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::{ScriptedLlm, TranscriptEntry};

    #[test]
    fn score_parsing() {
        assert_eq!(parse_judge_scores("9,8,10"), Some([9, 8, 10]));
        assert_eq!(parse_judge_scores("Scores: 7, 8, 6"), Some([7, 8, 6]));
        assert_eq!(parse_judge_scores("11,8,9"), None);
        assert_eq!(parse_judge_scores("great"), None);
    }

    #[test]
    fn scripted_judge_is_averaged() {
        let judge = ScriptedLlm::from_entries(vec![
            TranscriptEntry::new(TemplateId::JudgeAnswer, 1, "9,8,10"),
            TranscriptEntry::new(TemplateId::JudgeEvidence, 1, "6,6,7"),
        ]);
        let s = judge_scores("q", "p", "g", &[], &judge).unwrap();
        assert_eq!(s.a_score, Some(9.0));
        assert_eq!(s.e_score, Some(6.33));
        assert_eq!(s.e_criteria, Some([6, 6, 7]));
        assert!(s.flags.is_empty());
    }

    #[test]
    fn out_of_range_retries_then_null() {
        let judge = ScriptedLlm::from_entries(vec![
            TranscriptEntry::any(TemplateId::JudgeAnswer, "11,9,9"),
            TranscriptEntry::any(TemplateId::JudgeEvidence, "5,5,5"),
        ]);
        let s = judge_scores("q", "p", "g", &["e".into()], &judge).unwrap();
        assert_eq!(s.a_score, None);
        assert_eq!(s.flags.len(), 2);
        assert_eq!(judge.calls().iter().filter(|c| c.template == TemplateId::JudgeAnswer).count(), 2);
        assert_eq!(s.e_score, Some(5.0));
    }
}
