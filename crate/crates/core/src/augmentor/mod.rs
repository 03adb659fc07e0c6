//! Chat-completion transport and the dataset-level augmentation driver.

mod mock;
mod parse;
#[cfg(feature = "remote")]
mod remote;

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

pub use mock::{
    mock_code_rewrites, mock_query_rewrites, render_code_response, render_query_response,
    synonym_group, MockClient, MockPayload, SYNONYMS,
};
pub use parse::{parse_code_response, parse_query_response};
#[cfg(feature = "remote")]
pub use remote::{RemoteClient, RetryPolicy, TokenBucket, API_BASE_VAR, API_KEY_VAR};

use crate::corpus::{append_records, write_records, AugKind, AugmentationMap, Dataset, QueryCodePair};
use crate::error::{Error, Result};
use crate::prompting::{
    build_code_prompt, build_query_prompt, enforce_query_length, AugmentationBudget,
    RewriteTechnique,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

/// Unset optionals leave the provider defaults in place.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model_name: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: Option<f64>,
    pub max_output_tokens: Option<u32>,
}

impl ChatRequest {
    pub fn user(model_name: impl Into<String>, content: impl Into<String>) -> Self {
        Self {
            model_name: model_name.into(),
            messages: vec![ChatMessage {
                role: Role::User,
                content: content.into(),
            }],
            temperature: None,
            max_output_tokens: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.messages.iter().any(|m| m.role == Role::User) {
            return Err(Error::validation("request needs at least one user message"));
        }
        if self.messages.iter().any(|m| m.content.trim().is_empty()) {
            return Err(Error::validation("message content must be non-empty"));
        }
        Ok(())
    }

    pub fn last_user_content(&self) -> &str {
        self.messages
            .iter()
            .rev()
            .find(|m| m.role == Role::User)
            .map(|m| m.content.as_str())
            .unwrap_or("")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub content: String,
    pub finish_reason: String,
    pub usage: Option<Usage>,
}

pub trait RewriteClient: Sync {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse>;
}

/// Send one request, rejecting blank completions.
pub fn complete(client: &dyn RewriteClient, request: &ChatRequest) -> Result<ChatResponse> {
    request.validate()?;
    let resp = client.complete(request)?;
    if resp.content.trim().is_empty() {
        return Err(Error::EmptyResponse(format!(
            "finish_reason={:?}",
            resp.finish_reason
        )));
    }
    Ok(resp)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FailureRecord {
    pub origin_id: u64,
    pub kind: String,
    pub error: String,
}

#[derive(Debug, Clone)]
pub struct AugmentPaths {
    pub query_map: PathBuf,
    pub code_map: PathBuf,
    pub failures: PathBuf,
}

impl AugmentPaths {
    pub fn in_dir(dir: &Path) -> Self {
        Self {
            query_map: dir.join("dict_q.jsonl"),
            code_map: dir.join("dict_c.jsonl"),
            failures: dir.join("failures.jsonl"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct AugmentOptions {
    pub model_name: String,
    /// Origins processed concurrently.
    pub parallelism: usize,
    /// Drop query rewrites outside the length bound.
    pub enforce_length: bool,
    /// When set, results are appended after every batch of origins and
    /// origins already present in the files are skipped.
    pub output: Option<AugmentPaths>,
}

impl Default for AugmentOptions {
    fn default() -> Self {
        Self {
            model_name: "gpt-3.5-turbo-0301".to_string(),
            parallelism: 4,
            enforce_length: true,
            output: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct AugmentOutcome {
    pub dict_q: AugmentationMap,
    pub dict_c: AugmentationMap,
    pub failures: Vec<FailureRecord>,
    pub requests: usize,
    /// Origins found complete in existing output files.
    pub resumed: usize,
}

struct OriginResult {
    id: u64,
    queries: Vec<String>,
    codes: Vec<String>,
    failures: Vec<FailureRecord>,
    requests: usize,
}

fn push_unique(out: &mut Vec<String>, seen: &mut HashSet<String>, item: String) {
    if seen.insert(item.clone()) {
        out.push(item);
    }
}

fn augment_origin(
    pair: &QueryCodePair,
    client: &dyn RewriteClient,
    budget: &AugmentationBudget,
    opts: &AugmentOptions,
) -> OriginResult {
    let mut res = OriginResult {
        id: pair.id,
        queries: Vec::new(),
        codes: Vec::new(),
        failures: Vec::new(),
        requests: 0,
    };
    let fail = |kind: &str, e: Error| FailureRecord {
        origin_id: pair.id,
        kind: kind.to_string(),
        error: e.to_string(),
    };

    let mut seen = HashSet::from([pair.query.trim().to_string()]);
    let queries = build_query_prompt(&pair.query, budget).and_then(|prompt| {
        res.requests += 1;
        let resp = complete(client, &ChatRequest::user(&opts.model_name, prompt))?;
        parse_query_response(&resp.content)
    });
    match queries {
        Ok(items) => {
            for q in items {
                if res.queries.len() == budget.n_query {
                    break;
                }
                if opts.enforce_length && !enforce_query_length(&pair.query, &q, budget.alpha).unwrap_or(false) {
                    continue;
                }
                push_unique(&mut res.queries, &mut seen, q);
            }
        }
        Err(e) => res.failures.push(fail("query", e)),
    }

    let mut seen = HashSet::from([pair.code.clone()]);
    for technique in RewriteTechnique::ALL {
        let codes = build_code_prompt(&pair.code, technique, budget).and_then(|prompt| {
            res.requests += 1;
            let resp = complete(client, &ChatRequest::user(&opts.model_name, prompt))?;
            parse_code_response(&resp.content)
        });
        match codes {
            Ok(items) => {
                for c in items.into_iter().take(budget.n_code_per_technique) {
                    push_unique(&mut res.codes, &mut seen, c);
                }
            }
            Err(e) => res.failures.push(fail(&format!("code:{}", technique.slug()), e)),
        }
    }
    res
}

fn load_existing(path: &Path, kind: AugKind, ds: &Dataset) -> Result<AugmentationMap> {
    if path.exists() {
        AugmentationMap::load(path, kind, Some(ds))
    } else {
        write_records::<crate::corpus::AugmentationRecord>(path, [])?;
        Ok(AugmentationMap::new(kind))
    }
}

/// Request query and code rewrites for every pair of `ds`.
///
/// A failed request is recorded and the run continues. With output paths
/// set, completed origins are appended to the map files after each batch
/// so an interrupted run can be resumed.
pub fn augment_dataset(
    ds: &Dataset,
    client: &dyn RewriteClient,
    budget: &AugmentationBudget,
    opts: &AugmentOptions,
) -> Result<AugmentOutcome> {
    budget.validate()?;
    ds.validate()?;
    let (mut dict_q, mut dict_c) = match &opts.output {
        Some(paths) => (
            load_existing(&paths.query_map, AugKind::Query, ds)?,
            load_existing(&paths.code_map, AugKind::Code, ds)?,
        ),
        None => (AugmentationMap::new(AugKind::Query), AugmentationMap::new(AugKind::Code)),
    };
    if let Some(paths) = &opts.output {
        if !paths.failures.exists() {
            write_records::<FailureRecord>(&paths.failures, [])?;
        }
    }
    let done: HashSet<u64> = dict_q.entries.keys().chain(dict_c.entries.keys()).copied().collect();
    let pending: Vec<&QueryCodePair> = ds.pairs.iter().filter(|p| !done.contains(&p.id)).collect();
    let resumed = ds.pairs.len() - pending.len();

    let mut failures = Vec::new();
    let mut requests = 0;
    for chunk in pending.chunks(opts.parallelism.max(1)) {
        let results: Vec<OriginResult> = std::thread::scope(|s| {
            let handles: Vec<_> = chunk
                .iter()
                .map(|pair| s.spawn(move || augment_origin(pair, client, budget, opts)))
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("augmentation worker panicked"))
                .collect()
        });
        let mut chunk_q = AugmentationMap::new(AugKind::Query);
        let mut chunk_c = AugmentationMap::new(AugKind::Code);
        let mut chunk_failures = Vec::new();
        for r in results {
            requests += r.requests;
            for q in r.queries {
                chunk_q.push(r.id, q);
            }
            for c in r.codes {
                chunk_c.push(r.id, c);
            }
            chunk_failures.extend(r.failures);
        }
        if let Some(paths) = &opts.output {
            // chunk maps iterate in origin-id order, which keeps files stable
            append_records(&paths.query_map, chunk_q.records())?;
            append_records(&paths.code_map, chunk_c.records())?;
            append_records(&paths.failures, &chunk_failures)?;
        }
        dict_q.entries.extend(chunk_q.entries);
        dict_c.entries.extend(chunk_c.entries);
        failures.extend(chunk_failures);
    }
    Ok(AugmentOutcome {
        dict_q,
        dict_c,
        failures,
        requests,
        resumed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicUsize, Ordering};

    fn dataset() -> Dataset {
        Dataset::from_pairs(vec![
            QueryCodePair::new(1, "sort a list in python", "def sort_items(xs):\n    result = sorted(xs)\n    return result"),
            QueryCodePair::new(2, "reverse a string", "def flip(s):\n    out = s[::-1]\n    return out"),
        ])
        .unwrap()
    }

    #[test]
    fn counts_respect_budget() {
        let ds = dataset();
        let out = augment_dataset(&ds, &MockClient::new(7), &AugmentationBudget::default(), &AugmentOptions::default()).unwrap();
        for p in &ds.pairs {
            assert!(out.dict_q.variants(p.id).len() <= 15);
            assert!(!out.dict_q.variants(p.id).is_empty());
            assert!(out.dict_c.variants(p.id).len() <= 15);
            assert!(!out.dict_c.variants(p.id).is_empty());
        }
        assert_eq!(out.requests, 12);
        assert!(out.failures.is_empty());
    }

    #[test]
    fn seeded_runs_write_identical_files() {
        let ds = dataset();
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        for dir in [a.path(), b.path()] {
            let opts = AugmentOptions {
                output: Some(AugmentPaths::in_dir(dir)),
                ..AugmentOptions::default()
            };
            augment_dataset(&ds, &MockClient::new(3), &AugmentationBudget::default(), &opts).unwrap();
        }
        for f in ["dict_q.jsonl", "dict_c.jsonl", "failures.jsonl"] {
            assert_eq!(
                std::fs::read(a.path().join(f)).unwrap(),
                std::fs::read(b.path().join(f)).unwrap()
            );
        }
    }

    struct Counting<'a> {
        inner: MockClient,
        calls: &'a AtomicUsize,
    }

    impl RewriteClient for Counting<'_> {
        fn complete(&self, request: &ChatRequest) -> Result<ChatResponse> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            self.inner.complete(request)
        }
    }

    #[test]
    fn resume_only_requests_missing_origins() {
        let ds = dataset();
        let dir = tempfile::tempdir().unwrap();
        let opts = AugmentOptions {
            output: Some(AugmentPaths::in_dir(dir.path())),
            ..AugmentOptions::default()
        };
        let first = Dataset::from_pairs(vec![ds.pairs[0].clone()]).unwrap();
        augment_dataset(&first, &MockClient::new(3), &AugmentationBudget::default(), &opts).unwrap();

        let calls = AtomicUsize::new(0);
        let client = Counting { inner: MockClient::new(3), calls: &calls };
        let out = augment_dataset(&ds, &client, &AugmentationBudget::default(), &opts).unwrap();
        assert_eq!(calls.load(Ordering::SeqCst), 6);
        assert_eq!(out.resumed, 1);

        let fresh = tempfile::tempdir().unwrap();
        let opts_fresh = AugmentOptions {
            output: Some(AugmentPaths::in_dir(fresh.path())),
            ..AugmentOptions::default()
        };
        augment_dataset(&ds, &MockClient::new(3), &AugmentationBudget::default(), &opts_fresh).unwrap();
        assert_eq!(
            std::fs::read(dir.path().join("dict_q.jsonl")).unwrap(),
            std::fs::read(fresh.path().join("dict_q.jsonl")).unwrap()
        );
    }

    struct Refusing;

    impl RewriteClient for Refusing {
        fn complete(&self, _: &ChatRequest) -> Result<ChatResponse> {
            Ok(ChatResponse {
                content: "I cannot help with that.".into(),
                finish_reason: "stop".into(),
                usage: None,
            })
        }
    }

    #[test]
    fn failures_are_recorded_not_fatal() {
        let ds = dataset();
        let out = augment_dataset(&ds, &Refusing, &AugmentationBudget::default(), &AugmentOptions::default()).unwrap();
        assert!(out.dict_q.is_empty() && out.dict_c.is_empty());
        assert_eq!(out.failures.len(), 12);
        assert!(out.failures.iter().all(|f| f.error.contains("extract")));
    }

    #[test]
    fn no_cross_contamination() {
        let ds = dataset();
        let out = augment_dataset(&ds, &MockClient::new(11), &AugmentationBudget::default(), &AugmentOptions::default()).unwrap();
        for v in out.dict_c.variants(2) {
            assert!(v.text.contains("[::-1]"));
        }
        for v in out.dict_c.variants(1) {
            assert!(v.text.contains("sorted("));
        }
    }

    #[test]
    fn request_validation() {
        assert!(ChatRequest::user("m", " ").validate().is_err());
        let mut r = ChatRequest::user("m", "x");
        r.messages[0].role = Role::System;
        assert!(r.validate().is_err());
    }
}
