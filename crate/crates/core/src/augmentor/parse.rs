use std::sync::OnceLock;

use regex::Regex;

use crate::error::{Error, Result};
use crate::prompting::QUERY_OUTPUT_CONTEXT;

fn list_marker() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^\s*(?:\d+\s*[.):]|[-*•])\s*").unwrap())
}

fn strip_quotes(s: &str) -> &str {
    const PAIRS: [(char, char); 5] = [('"', '"'), ('\'', '\''), ('“', '”'), ('‘', '’'), ('`', '`')];
    for (open, close) in PAIRS {
        if s.len() >= 2 && s.starts_with(open) && s.ends_with(close) {
            return s[open.len_utf8()..s.len() - close.len_utf8()].trim();
        }
    }
    s
}

/// Extract rewritten queries from a numbered, bulleted or plain
/// line-delimited list. Only marked lines are used when any exist.
pub fn parse_query_response(text: &str) -> Result<Vec<String>> {
    let body = match text.rfind(QUERY_OUTPUT_CONTEXT) {
        Some(pos) => &text[pos + QUERY_OUTPUT_CONTEXT.len()..],
        None => text,
    };
    let lines: Vec<&str> = body.lines().map(str::trim).filter(|l| !l.is_empty()).collect();
    let marked: Vec<&str> = lines
        .iter()
        .filter_map(|l| list_marker().find(l).map(|m| &l[m.end()..]))
        .collect();
    let items: Vec<&str> = if !marked.is_empty() {
        marked
    } else if lines.len() >= 2 {
        lines
    } else {
        Vec::new()
    };
    let out: Vec<String> = items
        .into_iter()
        .map(|s| strip_quotes(s.trim()).to_string())
        .filter(|s| !s.is_empty())
        .collect();
    if out.is_empty() {
        return Err(Error::Extraction { raw: text.to_string() });
    }
    Ok(out)
}

/// Contents of every fenced block, byte-exact, in order. A language tag
/// after the opening fence is dropped.
pub fn parse_code_response(text: &str) -> Result<Vec<String>> {
    let mut out = Vec::new();
    let mut open: Option<usize> = None;
    let mut offset = 0;
    for line in text.split_inclusive('\n') {
        let start = offset;
        offset += line.len();
        let trimmed = line.trim();
        match open {
            None => {
                if let Some(tag) = trimmed.strip_prefix("```") {
                    if tag.chars().all(|c| c.is_alphanumeric() || "+-_.#".contains(c)) {
                        open = Some(offset);
                    }
                }
            }
            Some(body_start) => {
                if trimmed == "```" {
                    // drop the newline that precedes the closing fence
                    let end = start.saturating_sub(1).max(body_start);
                    let block = &text[body_start..end];
                    let block = block.strip_suffix('\r').unwrap_or(block);
                    if !block.trim().is_empty() {
                        out.push(block.to_string());
                    }
                    open = None;
                }
            }
        }
    }
    if open.is_some() || out.is_empty() {
        return Err(Error::Extraction { raw: text.to_string() });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbered_list() {
        let got = parse_query_response(
            "1. Calculate triangle area in Python\n2. Triangle area formula in Python",
        )
        .unwrap();
        assert_eq!(got, ["Calculate triangle area in Python", "Triangle area formula in Python"]);
    }

    #[test]
    fn dashes_quotes_and_header() {
        let got = parse_query_response("Rewritten Queries:\n- sort a list\n- \"order a list\"\n").unwrap();
        assert_eq!(got, ["sort a list", "order a list"]);
        let got = parse_query_response("Here you go:\n1) a b\n2: c d\nthanks").unwrap();
        assert_eq!(got, ["a b", "c d"]);
    }

    #[test]
    fn plain_lines_need_more_than_one() {
        assert_eq!(parse_query_response("a b\nc d").unwrap(), ["a b", "c d"]);
        assert!(matches!(
            parse_query_response("I cannot help with that."),
            Err(Error::Extraction { .. })
        ));
        assert!(parse_query_response("").is_err());
    }

    #[test]
    fn single_code_block() {
        let got = parse_code_response("Code 1\n```python\ndef f():\n    pass\n```").unwrap();
        assert_eq!(got, ["def f():\n    pass"]);
    }

    #[test]
    fn two_blocks_in_order_and_whitespace_kept() {
        let text = "Code 1\n```python\nx = 1\n\n  y = 2 \n```\n\nCode 2\n```\nreturn x\n```\n";
        let got = parse_code_response(text).unwrap();
        assert_eq!(got, ["x = 1\n\n  y = 2 ", "return x"]);
    }

    #[test]
    fn trailing_newline_inside_block_is_kept() {
        let got = parse_code_response("```python\nabc\n\n```").unwrap();
        assert_eq!(got, ["abc\n"]);
    }

    #[test]
    fn unterminated_or_missing_fence_fails() {
        assert!(parse_code_response("Code 1\n```python\ndef f(): pass\n").is_err());
        assert!(parse_code_response("no code here").is_err());
    }
}
