//! Deterministic stand-in for a chat model. Rewrites queries by synonym
//! substitution and word rotation, and code by identifier suffixing and
//! comment insertion, then formats the result exactly as the prompts ask.

use std::sync::OnceLock;

use rand::seq::SliceRandom;
use rand::Rng as _;
use regex::Regex;

use super::{ChatRequest, ChatResponse, RewriteClient};
use crate::error::{Error, Result};
use crate::prompting::{
    RewriteTechnique, CODE_INPUT_PREFIX, CODE_OUTPUT_CONTEXT, QUERY_INPUT_PREFIX,
    QUERY_OUTPUT_CONTEXT, TECHNIQUE_PREFIX,
};
use crate::rng::{self, fnv1a, Rng};

/// Groups of interchangeable query words. A word belongs to at most one
/// group.
pub const SYNONYMS: &[&[&str]] = &[
    &["sort", "order", "arrange"],
    &["list", "array", "sequence"],
    &["reverse", "invert", "flip"],
    &["string", "text", "characters"],
    &["split", "separate", "divide"],
    &["join", "concatenate", "combine"],
    &["read", "load", "ingest"],
    &["write", "save", "persist"],
    &["file", "document", "filepath"],
    &["number", "integer", "numeral"],
    &["count", "tally", "enumerate"],
    &["sum", "add", "accumulate"],
    &["average", "mean", "avg"],
    &["maximum", "max", "largest"],
    &["minimum", "min", "smallest"],
    &["remove", "delete", "drop"],
    &["find", "search", "locate"],
    &["replace", "substitute", "exchange"],
    &["convert", "transform", "cast"],
    &["dictionary", "dict", "mapping"],
    &["date", "day", "calendar"],
    &["time", "timestamp", "clock"],
    &["parse", "decode", "interpret"],
    &["print", "display", "show"],
    &["check", "verify", "validate"],
    &["empty", "blank", "vacant"],
    &["duplicate", "repeated", "redundant"],
    &["unique", "distinct", "dedup"],
    &["filter", "select", "pick"],
    &["merge", "union", "unite"],
    &["random", "shuffle", "arbitrary"],
    &["round", "truncate", "floor"],
    &["square", "power", "exponent"],
    &["length", "size", "len"],
    &["uppercase", "upper", "capitalize"],
    &["lowercase", "lower", "downcase"],
    &["whitespace", "spaces", "padding"],
    &["url", "link", "hyperlink"],
    &["download", "fetch", "retrieve"],
    &["image", "picture", "photo"],
    &["resize", "scale", "shrink"],
    &["matrix", "grid", "table"],
    &["column", "col", "attribute"],
    &["row", "line", "record"],
    &["first", "initial", "leading"],
    &["last", "final", "trailing"],
    &["index", "position", "offset"],
    &["area", "region", "surface"],
    &["triangle", "trigon", "tri"],
    &["function", "method", "routine"],
    &["get", "obtain", "acquire"],
    &["create", "make", "build"],
];

fn synonym_index() -> &'static std::collections::HashMap<&'static str, usize> {
    static IDX: OnceLock<std::collections::HashMap<&'static str, usize>> = OnceLock::new();
    IDX.get_or_init(|| {
        let mut m = std::collections::HashMap::new();
        for (g, words) in SYNONYMS.iter().enumerate() {
            for w in *words {
                m.insert(*w, g);
            }
        }
        m
    })
}

pub fn synonym_group(word: &str) -> Option<usize> {
    synonym_index().get(word.to_lowercase().as_str()).copied()
}

const COMMENTS: &[&str] = &[
    "helper step",
    "compute the value",
    "main logic",
    "handle the input",
    "update state",
    "prepare the result",
];

const SUFFIXES: &[&str] = &["val", "tmp", "res", "item", "obj", "new"];

#[derive(Debug, Clone)]
pub struct MockClient {
    pub seed: u64,
}

impl MockClient {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    fn request_rng(&self, prompt: &str) -> Rng {
        rng::derive_str(self.seed, "mock-client", &[fnv1a(prompt.as_bytes())])
    }
}

fn match_case(template: &str, word: &str) -> String {
    let mut chars = template.chars();
    match chars.next() {
        Some(c) if c.is_uppercase() => {
            let mut w = word.chars();
            match w.next() {
                Some(f) => f.to_uppercase().chain(w).collect(),
                None => String::new(),
            }
        }
        _ => word.to_string(),
    }
}

fn rewrite_query_once(words: &[&str], rng: &mut Rng) -> String {
    let mut out: Vec<String> = words
        .iter()
        .map(|w| match synonym_group(w) {
            Some(g) if rng.gen_bool(0.5) => {
                let choice = SYNONYMS[g].choose(rng).copied().unwrap_or(w);
                match_case(w, choice)
            }
            _ => w.to_string(),
        })
        .collect();
    if out.len() > 1 && rng.gen_bool(0.3) {
        let k = rng.gen_range(1..out.len());
        out.rotate_left(k);
    }
    out.join(" ")
}

/// `n` rewrites of `query`; each keeps the word count of the original.
pub fn mock_query_rewrites(query: &str, n: usize, rng: &mut Rng) -> Vec<String> {
    let words: Vec<&str> = query.split_whitespace().collect();
    let original = words.join(" ");
    let mut out: Vec<String> = Vec::with_capacity(n);
    for _ in 0..n {
        let mut candidate = rewrite_query_once(&words, rng);
        for _ in 0..8 {
            if candidate != original && !out.contains(&candidate) {
                break;
            }
            candidate = rewrite_query_once(&words, rng);
        }
        out.push(candidate);
    }
    out
}

fn assigned_names(code: &str) -> Vec<String> {
    static ASSIGN: OnceLock<Regex> = OnceLock::new();
    static PARAMS: OnceLock<Regex> = OnceLock::new();
    let assign = ASSIGN.get_or_init(|| Regex::new(r"(?m)^\s*([A-Za-z_][A-Za-z0-9_]*)\s*=[^=]").unwrap());
    let params = PARAMS.get_or_init(|| Regex::new(r"def\s+[A-Za-z_][A-Za-z0-9_]*\s*\(([^)]*)\)").unwrap());
    let mut names: Vec<String> = Vec::new();
    for c in params.captures_iter(code) {
        for p in c[1].split(',') {
            let p = p.split(['=', ':']).next().unwrap_or("").trim();
            if !p.is_empty() && p != "self" && p.chars().all(|c| c.is_alphanumeric() || c == '_') {
                names.push(p.to_string());
            }
        }
    }
    for c in assign.captures_iter(code) {
        names.push(c[1].to_string());
    }
    names.sort();
    names.dedup();
    names
}

fn function_names(code: &str) -> Vec<String> {
    static DEF: OnceLock<Regex> = OnceLock::new();
    let def = DEF.get_or_init(|| Regex::new(r"def\s+([A-Za-z_][A-Za-z0-9_]*)").unwrap());
    def.captures_iter(code).map(|c| c[1].to_string()).collect()
}

fn rename_word(code: &str, from: &str, to: &str) -> String {
    let re = Regex::new(&format!(r"\b{}\b", regex::escape(from))).unwrap();
    re.replace_all(code, regex::NoExpand(to)).into_owned()
}

fn insert_comment(code: &str, rng: &mut Rng) -> String {
    let lines: Vec<&str> = code.lines().collect();
    let at = rng.gen_range(0..=lines.len());
    let anchor = lines.get(at).or(lines.last()).copied().unwrap_or("");
    let indent: String = anchor.chars().take_while(|c| c.is_whitespace()).collect();
    let comment = format!("{indent}# {}", COMMENTS.choose(rng).unwrap());
    let mut out: Vec<String> = lines.iter().map(|s| s.to_string()).collect();
    out.insert(at, comment);
    out.join("\n")
}

/// `n` rewrites of `code` for one technique. Method renaming touches the
/// function name, variable renaming touches an assigned name; every
/// variant also gains one comment line.
pub fn mock_code_rewrites(code: &str, technique: RewriteTechnique, n: usize, rng: &mut Rng) -> Vec<String> {
    let base = code.trim_end_matches(['\n', '\r']);
    let targets = match technique {
        RewriteTechnique::RenameMethod => function_names(base),
        RewriteTechnique::MeaningfulVariables | RewriteTechnique::SameSemantics => assigned_names(base),
        _ => Vec::new(),
    };
    (0..n)
        .map(|k| {
            let mut variant = base.to_string();
            if let Some(name) = targets.choose(rng) {
                let suffix = SUFFIXES.choose(rng).unwrap();
                variant = rename_word(&variant, name, &format!("{name}_{suffix}{}", k + 1));
            }
            insert_comment(&variant, rng)
        })
        .collect()
}

pub fn render_query_response(items: &[String]) -> String {
    items
        .iter()
        .enumerate()
        .map(|(i, q)| format!("{}. {q}", i + 1))
        .collect::<Vec<_>>()
        .join("\n")
}

pub fn render_code_response(items: &[String]) -> String {
    items
        .iter()
        .enumerate()
        .map(|(i, c)| format!("Code {}\n```python\n{c}\n```", i + 1))
        .collect::<Vec<_>>()
        .join("\n\n")
}

fn requested_count(prompt: &str, noun: &str) -> Option<usize> {
    let marker = "You must generate (";
    let start = prompt.find(marker)? + marker.len();
    let rest = &prompt[start..];
    let end = rest.find(')')?;
    if !rest[end..].starts_with(&format!(") {noun}")) {
        return None;
    }
    rest[..end].trim().parse().ok()
}

/// What a mock response to `prompt` contains, before formatting.
pub enum MockPayload {
    Queries(Vec<String>),
    Codes(Vec<String>),
}

impl MockClient {
    pub fn payload(&self, prompt: &str) -> Result<MockPayload> {
        let mut rng = self.request_rng(prompt);
        if prompt.trim_end().ends_with(QUERY_OUTPUT_CONTEXT) {
            let n = requested_count(prompt, "queries")
                .ok_or_else(|| Error::validation("query prompt lacks a count"))?;
            let start = prompt
                .rfind(QUERY_INPUT_PREFIX)
                .ok_or_else(|| Error::validation("query prompt lacks the original query"))?
                + QUERY_INPUT_PREFIX.len();
            let query = prompt[start..].split("\n\n").next().unwrap_or("");
            return Ok(MockPayload::Queries(mock_query_rewrites(query, n, &mut rng)));
        }
        if prompt.trim_end().ends_with(CODE_OUTPUT_CONTEXT) {
            let n = requested_count(prompt, "codes")
                .ok_or_else(|| Error::validation("code prompt lacks a count"))?;
            let tech_start = prompt
                .find(TECHNIQUE_PREFIX)
                .ok_or_else(|| Error::validation("code prompt lacks a technique"))?
                + TECHNIQUE_PREFIX.len();
            let tech_line = prompt[tech_start..].lines().next().unwrap_or("");
            let technique = RewriteTechnique::from_instruction(tech_line)
                .ok_or_else(|| Error::validation("unknown rewriting technique"))?;
            let start = prompt
                .find(CODE_INPUT_PREFIX)
                .ok_or_else(|| Error::validation("code prompt lacks the original code"))?
                + CODE_INPUT_PREFIX.len();
            let end = prompt.rfind(&format!("\n\n{CODE_OUTPUT_CONTEXT}")).unwrap_or(prompt.len());
            let code = &prompt[start..end.max(start)];
            return Ok(MockPayload::Codes(mock_code_rewrites(code, technique, n, &mut rng)));
        }
        Err(Error::validation("mock client does not recognise this prompt"))
    }
}

impl RewriteClient for MockClient {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse> {
        request.validate()?;
        let prompt = request.last_user_content();
        let content = match self.payload(prompt)? {
            MockPayload::Queries(q) => render_query_response(&q),
            MockPayload::Codes(c) => render_code_response(&c),
        };
        Ok(ChatResponse {
            content,
            finish_reason: "stop".to_string(),
            usage: None,
        })
    }
}
