use std::sync::OnceLock;

use regex::Regex;

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ParsedList {
    pub items: Vec<String>,
    /// No list markers were found and the whole text became one item.
    pub degraded: bool,
}

fn marker() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^\s*(?:\d+\s*[.):]|[-*•])\s*(.*)$").expect("valid regex"))
}

/// Splits a numbered or bulleted response into trimmed items. Prose before
/// the first marker and blank lines are ignored.
pub fn parse_list_response(text: &str) -> ParsedList {
    let items: Vec<String> = text
        .lines()
        .filter_map(|line| marker().captures(line))
        .map(|c| c[1].trim().to_string())
        .filter(|s| !s.is_empty())
        .collect();
    if !items.is_empty() {
        return ParsedList {
            items,
            degraded: false,
        };
    }
    let whole = text.trim();
    ParsedList {
        items: if whole.is_empty() { Vec::new() } else { vec![whole.to_string()] },
        degraded: true,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbered_list() {
        assert_eq!(parse_list_response("1. a\n2. b").items, vec!["a", "b"]);
    }

    #[test]
    fn bulleted_list() {
        let p = parse_list_response("- a\n- b\n- c");
        assert_eq!(p.items, vec!["a", "b", "c"]);
        assert!(!p.degraded);
    }

    #[test]
    fn preamble_and_blank_lines_are_skipped() {
        let p = parse_list_response("Here are the sub-queries:\n\n1) first one \n\n2) second\n");
        assert_eq!(p.items, vec!["first one", "second"]);
    }

    #[test]
    fn no_markers_degrades_to_single_item() {
        let p = parse_list_response("  no list here ");
        assert_eq!(p.items, vec!["no list here"]);
        assert!(p.degraded);
    }

    #[test]
    fn empty_text_degrades_to_empty() {
        let p = parse_list_response("\n  \n");
        assert!(p.items.is_empty());
        assert!(p.degraded);
    }

    #[test]
    fn triple_with_dashes_survives() {
        let p = parse_list_response("1. The Worship of Venus - created by - ?");
        assert_eq!(p.items, vec!["The Worship of Venus - created by - ?"]);
    }
}
