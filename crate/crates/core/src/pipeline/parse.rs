//! Response grammars of the reflection and refinement templates.

use std::sync::OnceLock;

use regex::Regex;

use super::{Channel, DraftStep, LogicDraft, VerificationDecision};

fn re(cell: &'static OnceLock<Regex>, pattern: &str) -> &'static Regex {
    cell.get_or_init(|| Regex::new(pattern).expect("valid regex"))
}

fn strip_marker(line: &str) -> &str {
    static MARKER: OnceLock<Regex> = OnceLock::new();
    let m = re(&MARKER, r"^\s*(?:\d+\s*[.):]|[-*•])\s*");
    match m.find(line) {
        Some(found) => &line[found.end()..],
        None => line.trim_start(),
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct KeepList {
    /// Valid indices, ascending, deduplicated.
    pub indices: Vec<usize>,
    pub out_of_range: Vec<usize>,
    /// No `KEEP:` line was found.
    pub malformed: bool,
}

/// Reads `KEEP: 0, 2` (or `KEEP: NONE`) against `candidates` items.
pub fn parse_keep_indices(text: &str, candidates: usize) -> KeepList {
    static KEEP: OnceLock<Regex> = OnceLock::new();
    let keep = re(&KEEP, r"(?i)^\s*keep\s*:\s*(.*)$");
    let Some(caps) = text.lines().find_map(|l| keep.captures(l)) else {
        return KeepList {
            malformed: true,
            ..KeepList::default()
        };
    };
    let mut out = KeepList::default();
    for token in caps[1].split(|c: char| c == ',' || c.is_whitespace()) {
        let token = token.trim_matches(|c: char| c == '[' || c == ']' || c == '.');
        if let Ok(i) = token.parse::<usize>() {
            if i < candidates {
                if !out.indices.contains(&i) {
                    out.indices.push(i);
                }
            } else {
                out.out_of_range.push(i);
            }
        }
    }
    out.indices.sort_unstable();
    out
}

/// Reads `STEP: claim [S1, R2]` and `MISSING: gap` lines. `None` when the
/// response contains neither.
pub fn parse_logic_draft(text: &str) -> Option<LogicDraft> {
    static STEP: OnceLock<Regex> = OnceLock::new();
    static MISSING: OnceLock<Regex> = OnceLock::new();
    let step = re(&STEP, r"(?i)^step\s*:\s*(.*?)\s*(?:\[([^\]]*)\])?\s*$");
    let missing = re(&MISSING, r"(?i)^missing\s*:\s*(.*?)\s*$");
    let mut draft = LogicDraft::default();
    for line in text.lines().map(strip_marker) {
        if let Some(c) = step.captures(line) {
            let supporting = c
                .get(2)
                .map(|m| {
                    m.as_str()
                        .split(',')
                        .map(str::trim)
                        .filter(|s| !s.is_empty())
                        .map(str::to_string)
                        .collect()
                })
                .unwrap_or_default();
            draft.steps.push(DraftStep {
                claim: c[1].to_string(),
                supporting,
            });
        } else if let Some(c) = missing.captures(line) {
            if !c[1].is_empty() {
                draft.gaps.push(c[1].to_string());
            }
        }
    }
    (!draft.steps.is_empty() || !draft.gaps.is_empty()).then_some(draft)
}

/// First non-blank line must be exactly `ACCEPT` or `REJECT`; on reject,
/// each further non-blank line is a missing point. A bare `REJECT` yields
/// an empty point list, which the caller fills in.
pub fn parse_verification(text: &str) -> Result<VerificationDecision, String> {
    let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
    match lines.next() {
        Some("ACCEPT") => Ok(VerificationDecision::accept()),
        Some("REJECT") => Ok(VerificationDecision::reject(
            lines.map(|l| strip_marker(l).trim().to_string()).filter(|l| !l.is_empty()).collect(),
        )),
        Some(other) => Err(format!("expected ACCEPT or REJECT, got {other:?}")),
        None => Err("empty verification response".into()),
    }
}

/// Reads `S: …` / `R: …` lines. Returns the tagged items and the number of
/// non-blank lines that carried no channel tag.
pub fn parse_expansion(text: &str) -> (Vec<(Channel, String)>, usize) {
    static TAGGED: OnceLock<Regex> = OnceLock::new();
    let tagged = re(&TAGGED, r"^([SsRr])\s*:\s*(.*?)\s*$");
    let mut items = Vec::new();
    let mut untagged = 0;
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        match tagged.captures(strip_marker(line)) {
            Some(c) if !c[2].is_empty() => {
                let channel = if c[1].eq_ignore_ascii_case("s") {
                    Channel::Semantic
                } else {
                    Channel::Relational
                };
                items.push((channel, c[2].to_string()));
            }
            _ => untagged += 1,
        }
    }
    (items, untagged)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::Verdict;

    #[test]
    fn keep_list() {
        let k = parse_keep_indices("KEEP: 0, 2", 3);
        assert_eq!(k.indices, vec![0, 2]);
        assert!(!k.malformed);
        let k = parse_keep_indices("Sure.\nkeep: [2,7, 2]", 3);
        assert_eq!(k.indices, vec![2]);
        assert_eq!(k.out_of_range, vec![7]);
        let k = parse_keep_indices("KEEP: NONE", 3);
        assert!(k.indices.is_empty() && !k.malformed);
        assert!(parse_keep_indices("0, 1", 3).malformed);
    }

    #[test]
    fn draft_with_four_steps() {
        let text = "STEP: WIZE is licensed to Ward Township [S1]\nSTEP: Ward Township is in Randolph County [R1]\n\
                    STEP: Randolph County's seat is Winchester [S2, R2]\nSTEP: Winchester was founded in 1818 [X1.1]";
        let d = parse_logic_draft(text).unwrap();
        assert_eq!(d.steps.len(), 4);
        assert!(d.gaps.is_empty());
        assert_eq!(d.steps[2].supporting, vec!["S2", "R2"]);
        assert_eq!(d.steps[0].claim, "WIZE is licensed to Ward Township");
    }

    #[test]
    fn draft_gaps_are_case_insensitive() {
        let d = parse_logic_draft("STEP: a [S1]\nmissing: capital transition date").unwrap();
        assert_eq!(d.gaps, vec!["capital transition date"]);
        assert!(parse_logic_draft("just prose").is_none());
    }

    #[test]
    fn verification_grammar() {
        assert_eq!(parse_verification("ACCEPT").unwrap(), VerificationDecision::accept());
        let d = parse_verification("REJECT\n- need plague frequency in Venice").unwrap();
        assert_eq!(d.verdict, Verdict::Reject);
        assert_eq!(d.missing_points, vec!["need plague frequency in Venice"]);
        assert!(parse_verification("Accept, looks fine").is_err());
        assert!(parse_verification("  \n").is_err());
        assert!(parse_verification("REJECT").unwrap().missing_points.is_empty());
    }

    #[test]
    fn expansion_grammar() {
        let (items, untagged) = parse_expansion("R: Randolph County — became capital → ?");
        assert_eq!(items, vec![(Channel::Relational, "Randolph County — became capital → ?".to_string())]);
        assert_eq!(untagged, 0);
        let (items, untagged) = parse_expansion("Here:\n1. S: when was Winchester founded?\n- r: Winchester - founded in - ?\n");
        assert_eq!(items.len(), 2);
        assert_eq!(items[0].0, Channel::Semantic);
        assert_eq!(items[1].0, Channel::Relational);
        assert_eq!(untagged, 1);
    }
}
